fn main() -> std::process::ExitCode {
    chaoslab::cli::main_with_args(std::env::args_os())
}
