use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trialbench::cli;

/// Benchmark an observational emulation against its randomized trial.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate, benchmark and diagnose; writes a JSON report and a text summary.
    Analyze { config: PathBuf },
    /// Run a Monte Carlo study; writes a JSON report.
    Simulate { config: PathBuf },
    /// Check a config (and the data it names) without estimating.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match &args.command {
        Command::Analyze { config } => cli::run_analysis(config).map(|r| {
            eprintln!("wrote {}", r.metadata.config.output.report.display());
            print!("{}", cli::render_summary(&r));
            true
        }),
        Command::Simulate { config } => cli::run_simulation(config).map(|r| {
            eprintln!("wrote {}", r.metadata.config.output.report.display());
            true
        }),
        Command::Validate { config } => cli::run_validation(config).map(|v| {
            println!(
                "{}",
                serde_json::to_string_pretty(&v).expect("serializable")
            );
            v.passed()
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("{}", cli::error_object(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
