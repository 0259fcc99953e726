//! Byte-level encoding of the index files.
//!
//! Fixed-width integers are little-endian. Variable-width integers are
//! unsigned LEB128 (7 bits per byte, high bit = continuation).
//!
//! ```text
//! terms.<o>.dict     "QNGD" u32 version  u32 order  u64 term_count
//!                    per term: varint shared_prefix  varint suffix_len  suffix
//!                              varint doc_freq  varint postings_offset  varint postings_len
//!                    (shared_prefix is 0 on every RESTART_INTERVAL-th term)
//! postings.<o>.bin   "QNGP" u32 version  u32 order
//!                    per list: (varint ordinal_delta  varint tf)*  (first delta is absolute)
//! store.bin          "QNGS" u32 version, then paragraph records
//! store.idx          "QNGI" u32 version  u64 count
//!                    per paragraph: u64 record_offset  u32 len_1  u32 len_2  u32 len_3
//! ```

use crate::corpus::{Paragraph, ParagraphKey, Sentence};

pub const FORMAT_VERSION: u32 = 1;

pub const DICT_MAGIC: &[u8; 4] = b"QNGD";
pub const POSTINGS_MAGIC: &[u8; 4] = b"QNGP";
pub const STORE_MAGIC: &[u8; 4] = b"QNGS";
pub const STORE_IDX_MAGIC: &[u8; 4] = b"QNGI";

pub const DICT_HEADER_LEN: usize = 20;
pub const POSTINGS_HEADER_LEN: usize = 12;
pub const STORE_HEADER_LEN: usize = 8;
pub const STORE_IDX_HEADER_LEN: usize = 16;
pub const STORE_IDX_ENTRY_LEN: usize = 20;

pub const RESTART_INTERVAL: usize = 16;

pub fn write_varint(buf: &mut Vec<u8>, mut value: u64) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            buf.push(byte);
            return;
        }
        buf.push(byte | 0x80);
    }
}

pub fn read_varint(buf: &[u8], pos: &mut usize) -> Option<u64> {
    let mut value = 0u64;
    let mut shift = 0u32;
    loop {
        let byte = *buf.get(*pos)?;
        *pos += 1;
        if shift == 63 && byte > 1 {
            return None;
        }
        value |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Some(value);
        }
        shift += 7;
        if shift > 63 {
            return None;
        }
    }
}

pub fn write_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    write_varint(buf, bytes.len() as u64);
    buf.extend_from_slice(bytes);
}

pub fn read_bytes<'a>(buf: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    let len = usize::try_from(read_varint(buf, pos)?).ok()?;
    let end = pos.checked_add(len)?;
    let out = buf.get(*pos..end)?;
    *pos = end;
    Some(out)
}

pub fn read_str<'a>(buf: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    std::str::from_utf8(read_bytes(buf, pos)?).ok()
}

pub fn header(magic: &[u8; 4], extra: &[u64]) -> Vec<u8> {
    let mut h = magic.to_vec();
    h.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for &x in extra {
        h.extend_from_slice(&x.to_le_bytes());
    }
    h
}

pub fn u32_at(buf: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(buf.get(at..at + 4)?.try_into().ok()?))
}

pub fn u64_at(buf: &[u8], at: usize) -> Option<u64> {
    Some(u64::from_le_bytes(buf.get(at..at + 8)?.try_into().ok()?))
}

/// Delta + varint encoding of `(ordinal, tf)` pairs sorted by ordinal.
pub fn encode_postings(entries: &[(u32, u32)], buf: &mut Vec<u8>) {
    let mut prev = 0u32;
    for (i, &(ord, tf)) in entries.iter().enumerate() {
        debug_assert!(i == 0 || ord > prev, "postings must be strictly increasing");
        write_varint(buf, u64::from(ord - if i == 0 { 0 } else { prev }));
        write_varint(buf, u64::from(tf));
        prev = ord;
    }
}

pub fn decode_postings(bytes: &[u8]) -> Option<Vec<(u32, u32)>> {
    let mut pos = 0;
    let mut prev = 0u32;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let delta = u32::try_from(read_varint(bytes, &mut pos)?).ok()?;
        let tf = u32::try_from(read_varint(bytes, &mut pos)?).ok()?;
        let ord = if out.is_empty() {
            delta
        } else {
            if delta == 0 {
                return None;
            }
            prev.checked_add(delta)?
        };
        if tf == 0 {
            return None;
        }
        out.push((ord, tf));
        prev = ord;
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermInfo {
    pub doc_freq: u32,
    pub offset: u64,
    pub len: u64,
}

/// Front-coded term dictionary writer. Terms must arrive in ascending
/// byte order.
#[derive(Default)]
pub struct DictEncoder {
    buf: Vec<u8>,
    prev: Vec<u8>,
    count: u64,
}

impl DictEncoder {
    pub fn push(&mut self, term: &str, info: TermInfo) {
        let term = term.as_bytes();
        debug_assert!(self.count == 0 || term > self.prev.as_slice());
        let shared = if (self.count as usize).is_multiple_of(RESTART_INTERVAL) {
            0
        } else {
            common_prefix(&self.prev, term)
        };
        write_varint(&mut self.buf, shared as u64);
        write_bytes(&mut self.buf, &term[shared..]);
        write_varint(&mut self.buf, u64::from(info.doc_freq));
        write_varint(&mut self.buf, info.offset);
        write_varint(&mut self.buf, info.len);
        self.prev.clear();
        self.prev.extend_from_slice(term);
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn body(&self) -> &[u8] {
        &self.buf
    }
}

fn common_prefix(a: &[u8], b: &[u8]) -> usize {
    let mut n = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    // Keep the shared prefix on a char boundary so every suffix is UTF-8.
    while n > 0 && n < b.len() && (b[n] & 0xC0) == 0x80 {
        n -= 1;
    }
    n
}

/// Decodes a dictionary body (after the header) into sorted terms.
pub fn decode_dict(body: &[u8], count: u64) -> Option<Vec<(String, TermInfo)>> {
    let mut out = Vec::with_capacity(usize::try_from(count).ok()?.min(1 << 24));
    let mut pos = 0;
    let mut prev: Vec<u8> = Vec::new();
    for _ in 0..count {
        let shared = usize::try_from(read_varint(body, &mut pos)?).ok()?;
        let suffix = read_bytes(body, &mut pos)?;
        if shared > prev.len() {
            return None;
        }
        prev.truncate(shared);
        prev.extend_from_slice(suffix);
        let doc_freq = u32::try_from(read_varint(body, &mut pos)?).ok()?;
        let offset = read_varint(body, &mut pos)?;
        let len = read_varint(body, &mut pos)?;
        let term = String::from_utf8(prev.clone()).ok()?;
        out.push((term, TermInfo { doc_freq, offset, len }));
    }
    (pos == body.len()).then_some(out)
}

pub fn encode_paragraph(p: &Paragraph, buf: &mut Vec<u8>) {
    write_bytes(buf, p.doc_id.as_bytes());
    write_varint(buf, u64::from(p.para_index));
    write_bytes(buf, p.title.as_bytes());
    write_bytes(buf, p.text.as_bytes());
    write_varint(buf, p.sentences.len() as u64);
    for s in &p.sentences {
        write_bytes(buf, s.text.as_bytes());
        write_varint(buf, s.tokens.len() as u64);
        for t in &s.tokens {
            write_bytes(buf, t.as_bytes());
        }
    }
}

pub fn decode_key(buf: &[u8]) -> Option<ParagraphKey> {
    let mut pos = 0;
    let doc_id = read_str(buf, &mut pos)?.to_string();
    let para_index = u32::try_from(read_varint(buf, &mut pos)?).ok()?;
    Some(ParagraphKey { doc_id, para_index })
}

pub fn decode_paragraph(buf: &[u8]) -> Option<Paragraph> {
    let mut pos = 0;
    let doc_id = read_str(buf, &mut pos)?.to_string();
    let para_index = u32::try_from(read_varint(buf, &mut pos)?).ok()?;
    let title = read_str(buf, &mut pos)?.to_string();
    let text = read_str(buf, &mut pos)?.to_string();
    let n_sent = read_varint(buf, &mut pos)?;
    let mut sentences = Vec::new();
    for i in 0..n_sent {
        let text = read_str(buf, &mut pos)?.to_string();
        let n_tok = read_varint(buf, &mut pos)?;
        let mut tokens = Vec::new();
        for _ in 0..n_tok {
            tokens.push(read_str(buf, &mut pos)?.to_string());
        }
        sentences.push(Sentence {
            sent_index: u32::try_from(i).ok()?,
            text,
            tokens,
        });
    }
    (pos == buf.len()).then_some(Paragraph {
        doc_id,
        para_index,
        title,
        text,
        sentences,
    })
}
