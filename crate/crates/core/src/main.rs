use std::process::ExitCode;

fn main() -> ExitCode {
    deephash::cli::main_with_args(std::env::args_os())
}
