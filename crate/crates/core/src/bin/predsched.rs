use std::process::ExitCode;

fn main() -> ExitCode {
    predsched::cli::main_with_args(std::env::args_os())
}
