fn main() -> std::process::ExitCode {
    sts_service::cli::main()
}
