use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use etes::config::{ExperimentConfig, Mode, RawConfig};
use etes::experiment::{self, ExperimentError};
use etes::trigger;

const DEFAULT_OUT: &str = "etes-out";

#[derive(Parser)]
#[command(name = "etes", version, about = "Event-triggered extremum seeking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV files and report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Run one experiment per value of a configuration key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the tuning diagnostics only.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<RawConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(RawConfig::parse(&text)?)
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run { config, mode, out, iters } => {
            let mut raw = load(&config)?;
            if let Some(mode) = mode {
                raw.set("run.mode", mode.to_string());
            }
            if let Some(iters) = iters {
                raw.set("run.n_iters", iters.to_string());
            }
            let cfg = ExperimentConfig::from_raw(&raw)?;
            let out = out
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let outcome = experiment::run_experiment(&cfg, &out)?;
            print!("{}", experiment::render_report(&outcome));
            eprintln!("wrote {}", out.display());
        }
        Command::Sweep { config, param, values, out } => {
            let raw = load(&config)?;
            let values: Vec<String> = values
                .into_iter()
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            let rows = experiment::sweep(&raw, &param, &values, &out)?;
            print!("{}", experiment::summary_csv(&rows));
        }
        Command::Check { config } => {
            let cfg = ExperimentConfig::from_raw(&load(&config)?)?;
            let report = trigger::validate_assumption(&cfg.map, &cfg.lp, &cfg.trig);
            print!("{}", experiment::render_assumption(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
