use std::process::ExitCode;
use std::time::Instant;

use billiard_lens_cli::{execute_and_write, Cli, CliError, EXIT_VALIDATION, THREADS_ENV};
use clap::Parser;

fn fail(e: &CliError) -> ExitCode {
    let report = serde_json::json!({ "status": "error", "reason": e.reason(), "message": e.to_string() });
    eprintln!("{report}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = serde_json::json!({ "status": "error", "reason": "invalid-arguments", "message": e.to_string() });
            eprintln!("{report}");
            return ExitCode::from(EXIT_VALIDATION as u8);
        }
    };
    let run = match cli.resolve(std::env::var(THREADS_ENV).ok()) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let started = Instant::now();
    match execute_and_write(&run) {
        Ok(outcome) => {
            print!("{}", outcome.report(run.command.name(), run.seed));
            eprintln!("{} finished in {:.2} s", run.command.name(), started.elapsed().as_secs_f64());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => fail(&e),
    }
}
