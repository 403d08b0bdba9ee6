fn main() -> std::process::ExitCode {
    scmkit::cli::main()
}
