//! Corpus alignment and retrieval evaluation for Wikipedia-based QA corpora.
//!
//! The pipeline streams an article dump into an on-disk n-gram index,
//! aligns gold answer sentences of QA corpora to indexed paragraphs with a
//! weighted n-gram cosine, benchmarks question retrieval against those
//! alignments, and reports corpus statistics and ranking metrics.

pub mod align;
pub mod analytics;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod index;
pub mod ingest;
pub mod metrics;
pub mod retrieval;
pub mod text;

pub use align::{build_silver_dataset, weighted_similarity, SilverDataset, SimilarityBreakdown};
pub use analytics::{classify_question_type, compute_stats, type_distribution, CorpusStats, QuestionType};
pub use corpus::{
    AlignmentConfig, AlignmentRecord, Candidate, CorpusTag, Paragraph, ParagraphKey, QAEntry, Sentence, SourceRef,
};
pub use error::{Error, Result};
pub use index::{build_index, IndexMeta, IndexSettings, NGramIndex, OrderWeights, RetrievalHit};
pub use text::{tokenize, TokenizerConfig};
