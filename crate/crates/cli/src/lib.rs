//! Library side of the `clv` command-line tool.

pub mod args;
pub mod commands;
pub mod error;

pub use args::{Cli, Command};
pub use error::CliError;

/// Runs one parsed invocation, on a dedicated pool when `--threads` is set.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let command = cli.command;
    let dispatch = move || match command {
        Command::Baseline(a) => commands::baseline(a),
        Command::Score(a) => commands::score(a),
        Command::Curve(a) => commands::curve(a),
        Command::FitOdds(a) => commands::fit_odds(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?
            .install(dispatch),
        None => dispatch(),
    }
}
