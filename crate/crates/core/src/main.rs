fn main() -> std::process::ExitCode {
    amprlab::cli::main()
}
