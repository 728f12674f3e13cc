mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gap_thermal_core::GapError;

#[derive(Parser)]
#[command(
    name = "gap-thermal",
    version,
    about = "Sample thermal random wave functions and measure their regularity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print and save the thermalized spectrum for a config.
    Model(CommonArgs),
    /// Draw wave-function samples and write coefficient CSV files.
    Sample(CommonArgs),
    /// Run the configured regularity diagnostics and write a report.
    Diagnose(CommonArgs),
    /// Integrate Bohmian trajectories and write them as CSV files.
    Bohm(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the sample count (and the diagnostics sample size).
    #[arg(long)]
    samples: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the inverse temperature.
    #[arg(long)]
    beta: Option<f64>,
}

impl CommonArgs {
    fn overrides(&self) -> config::Overrides {
        config::Overrides {
            seed: self.seed,
            samples: self.samples,
            out: self.out.clone(),
            beta: self.beta,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&CommonArgs, fn(&config::Experiment) -> gap_thermal_core::Result<()>) =
        match &cli.command {
            Command::Model(a) => (a, commands::model),
            Command::Sample(a) => (a, commands::sample),
            Command::Diagnose(a) => (a, commands::diagnose),
            Command::Bohm(a) => (a, commands::bohm),
        };
    match config::load(&args.config, &args.overrides()).and_then(|exp| run(&exp)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                GapError::InvalidParameter(_)
                | GapError::UnsupportedModel(_)
                | GapError::ResourceLimit(_)
                | GapError::Format(_) => 2,
                GapError::Io(_) => 3,
                _ => 4,
            })
        }
    }
}
