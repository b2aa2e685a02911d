//! The `regopt` command-line tool.
//!
//! `generate` writes datasets, `fit-optimal` computes the closed-form maps,
//! `train` runs the warm-started learning chain and `report` turns the
//! result files into CSV tables and plot data. All outputs live under
//! `--out`; see [`pipeline::Layout`].

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod results;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::error::{CliError, CliResult};
use crate::pipeline::Layout;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "REGOPT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "regopt", version, about = "Optimal and learned linear regularizers for deconvolution experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// TOML configuration, merged over the preset.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in base configuration: deconv, deconv-small, dereverb, dereverb-small.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Overrides the configured seed.
    #[arg(long, value_name = "INT")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Serial moment accumulation with a fixed reduction order.
    #[arg(long, value_name = "BOOL", default_value_t = true, action = clap::ArgAction::Set)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train and test datasets.
    Generate(Common),
    /// Fit the closed-form maps and evaluate them.
    FitOptimal(Common),
    /// Train the learned maps with the warm-start chain.
    Train(Common),
    /// Write CSV tables and plot data from the result files.
    Report {
        /// Output directory of earlier commands.
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

fn context(c: &Common) -> CliResult<Context> {
    let mut config = config::load(c.config.as_deref(), c.preset.as_deref())?;
    if let Some(seed) = c.seed {
        config.seed = seed;
    }
    Ok(Context {
        config,
        layout: Layout::new(&c.out),
        deterministic: c.deterministic,
    })
}

/// Sizes the global thread pool from `REGOPT_THREADS`, if set.
pub fn init_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}: expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("{THREADS_ENV}: {e}")))
}

pub fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Generate(c) => commands::generate(&context(&c)?),
        Command::FitOptimal(c) => commands::fit_optimal(&context(&c)?).map(|_| ()),
        Command::Train(c) => commands::train_learned(&context(&c)?).map(|_| ()),
        Command::Report { out } => {
            let written = report::report(&Layout::new(out))?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}
