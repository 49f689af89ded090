fn main() -> std::process::ExitCode {
    pathent::cli::main()
}
