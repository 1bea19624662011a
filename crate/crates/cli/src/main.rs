use std::process::ExitCode;

fn main() -> ExitCode {
    voltgrid_cli::run(std::env::args_os())
}
