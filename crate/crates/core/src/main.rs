fn main() -> std::process::ExitCode {
    saros::cli::main()
}
