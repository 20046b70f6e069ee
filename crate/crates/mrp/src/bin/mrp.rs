use std::process::ExitCode;

fn main() -> ExitCode {
    mrp::cli::main_with(std::env::args_os())
}
