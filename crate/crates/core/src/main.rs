fn main() -> std::process::ExitCode {
    gsp::cli::main()
}
