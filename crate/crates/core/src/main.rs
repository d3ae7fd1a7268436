use std::process::ExitCode;

fn main() -> ExitCode {
    wgspec::cli::main_with_args(std::env::args_os())
}
