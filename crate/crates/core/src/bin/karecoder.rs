fn main() -> std::process::ExitCode {
    karecoder::cli::main()
}
