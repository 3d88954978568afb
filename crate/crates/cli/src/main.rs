mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{expand_config, Cli, Command};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 1;

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match &cli.command {
        Command::Convergence(a) => commands::convergence(a),
        Command::RigidBody(a) => commands::rigid_body(a),
        Command::CorrFlow(a) => commands::corr_flow(a),
        Command::StepCheck(a) => commands::step_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_numerical() => {
            eprintln!("error: {} failed numerically: {e}", cli.command.name());
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(liesde::Error::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
