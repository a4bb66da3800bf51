fn main() -> std::process::ExitCode {
    stc_server::cli::main()
}
