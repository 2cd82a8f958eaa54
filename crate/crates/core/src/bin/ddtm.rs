use std::process::ExitCode;

fn main() -> ExitCode {
    ddtm::cli::main_with_args(std::env::args_os())
}
