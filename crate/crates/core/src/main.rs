fn main() -> std::process::ExitCode {
    qacorpus::cli::main()
}
