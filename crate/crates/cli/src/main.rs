fn main() -> std::process::ExitCode {
    stso_cli::main_with_args(std::env::args_os())
}
