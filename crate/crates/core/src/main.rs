use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(logfactor::cli::main_with(std::env::args_os()))
}
