use std::process::ExitCode;

fn main() -> ExitCode {
    boxsearch::harness::cli::run_cli()
}
