use std::process::ExitCode;

fn main() -> ExitCode {
    regionfl::cli::main_with_args(std::env::args_os())
}
