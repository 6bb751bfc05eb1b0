//! `rainq` batch front end: dataset construction, training, retrieval,
//! evaluation reports and gridded difference maps, each driven by one JSON
//! run config with a few command-line overrides.

pub mod commands;
pub mod config;
pub mod report;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

pub use config::{Overrides, RunConfig, RECEIPT_FILE};

/// Exit status for a malformed command line or config.
pub const EXIT_USAGE: u8 = 2;
/// Exit status for unreadable, missing or inconsistent data.
pub const EXIT_DATA: u8 = 3;
/// Exit status for a numerical abort during training.
pub const EXIT_NUMERICAL: u8 = 4;

/// A configuration problem; maps to [`EXIT_USAGE`].
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "rainq", version, about = "Quantile rain retrieval: build, train, retrieve, evaluate")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run config; defaults apply when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// seed for scene generation, weight initialization and shuffling
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// output directory of this command
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// rain / no-rain threshold in mm/hr
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// map cell size in degrees
    #[arg(long, global = true)]
    pub cell_deg: Option<f64>,
    /// land/ocean mask (MSK1)
    #[arg(long, global = true)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate or ingest scenes, select, split and normalize them
    BuildDataset,
    /// Train the quantile U-net on the dataset's train split
    Train,
    /// Run a checkpoint over TB scenes and write quantiles and medians
    Retrieve,
    /// Write the verification report for retrieved scenes
    Evaluate,
    /// Grid per-pixel and per-cell differences between estimates and reference
    GridDiff,
}

impl Command {
    fn out_dir(self) -> fn(&mut RunConfig) -> &mut PathBuf {
        match self {
            Command::BuildDataset => |c| &mut c.dataset_dir,
            Command::Train => |c| &mut c.train_dir,
            Command::Retrieve => |c| &mut c.retrieve_dir,
            Command::Evaluate => |c| &mut c.report_dir,
            Command::GridDiff => |c| &mut c.grid_diff_dir,
        }
    }
}

/// Resolve the config and run one command.
pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    let overrides = Overrides {
        seed: g.seed,
        out: g.out.clone(),
        threshold: g.threshold,
        cell_deg: g.cell_deg,
        mask: g.mask.clone(),
    };
    let cfg = RunConfig::load(g.config.as_deref())?.resolve(&overrides, cli.command.out_dir())?;
    match cli.command {
        Command::BuildDataset => commands::build_dataset(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Retrieve => commands::retrieve(&cfg),
        Command::Evaluate => report::evaluate(&cfg),
        Command::GridDiff => report::grid_diff(&cfg),
    }
}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(rainq::Error::NonFiniteLoss { .. }) = cause.downcast_ref::<rainq::Error>() {
            return EXIT_NUMERICAL;
        }
    }
    EXIT_DATA
}

/// Fill a fresh sibling directory and swap it in place of `out` only once
/// `fill` succeeds, so a failed run leaves no partial output behind.
pub(crate) fn write_atomically(out: &Path, fill: impl FnOnce(&Path) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
    let staging = tempfile::Builder::new()
        .prefix(".rainq-staging-")
        .tempdir_in(&parent)
        .with_context(|| format!("creating a staging directory in {}", parent.display()))?;
    fill(staging.path())?;
    if out.exists() {
        fs::remove_dir_all(out).with_context(|| format!("replacing {}", out.display()))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, out).with_context(|| format!("moving results into {}", out.display()))
}
