use std::process::ExitCode;

fn main() -> ExitCode {
    microbrowse::cli::run(std::env::args_os())
}
