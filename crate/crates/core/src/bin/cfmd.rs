fn main() -> std::process::ExitCode {
    cfmdct::cli::main()
}
