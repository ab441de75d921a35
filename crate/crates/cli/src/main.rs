//! Command-line front end: `elgof test` checks a null model on a data file,
//! `elgof sim` produces Monte Carlo rejection tables.

mod error;
mod input;
mod sim_cmd;
mod test_cmd;

use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    /// Newline-delimited JSON records.
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "elgof", version, about = "Empirical-likelihood model checks for regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test a null regression model on a data file.
    Test(Box<test_cmd::TestArgs>),
    /// Run a Monte Carlo rejection-rate study.
    Sim(Box<sim_cmd::SimArgs>),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Test(args) => test_cmd::execute(&args).map(Some),
        Command::Sim(args) => sim_cmd::execute(*args),
    };
    match result {
        Ok(Some(text)) => {
            let mut out = std::io::stdout().lock();
            if out.write_all(text.as_bytes()).and_then(|_| out.flush()).is_err() {
                return ExitCode::from(8);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
