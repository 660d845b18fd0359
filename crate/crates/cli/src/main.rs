fn main() -> std::process::ExitCode {
    fpsi_cli::main_with_args(std::env::args().skip(1).collect())
}
