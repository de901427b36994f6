//! Command-line front end: TOML configuration in, CSV out.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fracbubble", version, about = "Bubble towers for the perturbed fractional critical equation")]
pub struct Cli {
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; overrides output.path. Standard output when neither is set.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides output.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads of the global pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// U, Z and (-Δ)^s along a segment.
    BubbleEval,
    /// Weighted residual norms over problem.eps_list.
    ResidualSweep,
    /// Local Pohozaev identities on half-balls.
    Pohozaev,
    /// Solve the reduced system.
    Reduce,
    /// Exponents, normalisations and B1, B2, B3.
    Constants,
    /// Fast invariant checks; exit 1 on any failure.
    Selftest,
    /// Print a plotting script for the CSV files.
    PlotScript,
    /// Print the effective configuration.
    ShowConfig,
}

/// Bytes of the command's output and the number of failed selftest checks.
pub struct Outcome {
    pub bytes: Vec<u8>,
    pub failures: usize,
}

/// Runs one command on an already parsed configuration.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let seed = cfg.output.seed;
    let effective = cfg.effective()?;
    // the destination does not change the numbers
    let hash = output::params_hash(
        &RunConfig {
            output: config::OutputSection {
                path: None,
                ..effective.output.clone()
            },
            ..effective.clone()
        }
        .to_toml(),
    );
    let mut failures = 0;
    let table = match command {
        Command::BubbleEval => commands::bubble_eval(cfg)?,
        Command::ResidualSweep => commands::residual_sweep(cfg, seed)?,
        Command::Pohozaev => commands::pohozaev(cfg)?,
        Command::Reduce => commands::reduce(cfg)?,
        Command::Constants => commands::constants(cfg)?,
        Command::Selftest => {
            let (t, f) = commands::selftest(seed)?;
            failures = f;
            t
        }
        Command::PlotScript => {
            return Ok(Outcome {
                bytes: commands::plot_script().into_bytes(),
                failures,
            })
        }
        Command::ShowConfig => {
            return Ok(Outcome {
                bytes: effective.to_toml().into_bytes(),
                failures,
            })
        }
    };
    Ok(Outcome {
        bytes: output::render(&table, seed, &hash)?,
        failures,
    })
}

/// Loads the configuration, applies the flags, runs the command and writes
/// the output.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.output.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.to_string_lossy().into_owned());
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let outcome = execute(cli.command, &cfg)?;
    match &cfg.output.path {
        Some(path) => std::fs::write(path, &outcome.bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&outcome.bytes)?;
        }
    }
    if outcome.failures > 0 {
        return Err(CliError::SelftestFailed(outcome.failures));
    }
    Ok(())
}
