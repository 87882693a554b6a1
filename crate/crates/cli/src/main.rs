//! `biharm`: configuration-driven scattering experiments.
//!
//! Exit codes: 0 when every verdict passes, 1 when a verdict fails, 2 for
//! configuration errors, 3 for numerical errors, 4 for output failures.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::output::{write_manifest, OutDir};

#[derive(Parser)]
#[command(
    name = "biharm",
    version,
    about = "High-frequency scattering experiments for the perturbed biharmonic operator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Seed override for every random draw.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate scattering amplitudes.
    Forward,
    /// Reconstruct curl A and V - ½∇·A from amplitudes.
    Invert,
    /// Check that gauge transforms leave the data's invariants unchanged.
    GaugeTest,
    /// Propagate amplitude noise into the reconstructed spectra.
    Stability,
    /// Fit the decay of the amplitude remainder in the frequency.
    Scaling,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Invert => "invert",
            Command::GaugeTest => "gauge-test",
            Command::Stability => "stability",
            Command::Scaling => "scaling",
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config {
        path: PathBuf::from("-"),
        message: "no configuration given; pass --config PATH".into(),
    })?;
    let mut cfg = LoadedConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.config.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.config.output = o;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    let mut out = OutDir::create(&cfg.config.output)?;
    let verdict = match cli.command {
        Command::Forward => commands::forward(&cfg, &mut out)?,
        Command::Invert => commands::invert(&cfg, &mut out)?,
        Command::GaugeTest => commands::gauge_test(&cfg, &mut out)?,
        Command::Stability => commands::stability(&cfg, &mut out)?,
        Command::Scaling => commands::scaling(&cfg, &mut out)?,
    };
    write_manifest(
        &mut out,
        cli.command.name(),
        &cfg.config,
        cli.threads,
        verdict,
    )?;
    let passed = verdict.unwrap_or(true);
    println!(
        "{}: {} ({})",
        cli.command.name(),
        match verdict {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "done",
        },
        cfg.config.output.display()
    );
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
