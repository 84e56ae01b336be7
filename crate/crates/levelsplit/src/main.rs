use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use levelsplit::commands::{self, load_config, Overrides};
use levelsplit::report::RunResults;

/// Rare-event estimation by importance splitting.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the splitting algorithm for every configured n.
    Run(Target),
    /// Verify the configured subsolution.
    Check(Target),
    /// Compute exact values by linear solve or closed form.
    Oracle(Target),
    /// Re-render the table of an exported results.json.
    Render { results: PathBuf },
}

#[derive(Args)]
struct Target {
    /// Experiment configuration (JSON).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Particle cap per run.
    #[arg(long)]
    cap: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Target {
    fn load(&self) -> Result<levelsplit::ExperimentConfig> {
        let overrides =
            Overrides { seed: self.seed, runs: self.runs, workers: self.workers, cap: self.cap, out: self.out.clone() };
        load_config(&self.config, &overrides)
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    Ok(match cli.command {
        Command::Run(t) => commands::cmd_run(&t.load()?)?.1,
        Command::Check(t) => commands::cmd_check(&t.load()?)?.1,
        Command::Oracle(t) => {
            commands::cmd_oracle(&t.load()?)?;
            0
        }
        Command::Render { results } => {
            print!("{}", RunResults::read_json(&results)?.render());
            0
        }
    })
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
