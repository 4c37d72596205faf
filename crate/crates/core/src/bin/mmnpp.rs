fn main() -> std::process::ExitCode {
    mmnpp::cli::main()
}
