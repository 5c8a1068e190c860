//! Command-line front end. Every artifact records the digest of the
//! configuration that produced it, and commands refuse inputs whose digest
//! does not match the current configuration.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

pub use config::{AnalysisConfig, DataConfig, RunConfig};

use crate::error::Result;
use crate::maskfab::{MaskStrategy, Region};
use crate::probefab::ProbeKind;
use crate::trainfab::Variant;

/// Exit status of a failed selfcheck.
pub const EXIT_SELFCHECK: i32 = 2;
/// Exit status of a contract, format or I/O error.
pub const EXIT_ERROR: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "iajepa", version, about = "Interaction-aware masked latent prediction on a synthetic physics world")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for pre-training and probing.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Thread cap; results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Simulate clips, labels and questions.
    GenData,
    /// Staged pre-training of one variant.
    Pretrain {
        #[arg(long, value_parser = parse_variant)]
        variant: Variant,
        #[arg(long)]
        data: PathBuf,
    },
    /// Frozen features of every clip.
    Extract {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and score a probe on frozen features.
    Probe {
        #[arg(long, value_parser = parse_probe)]
        task: ProbeKind,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Dispersion, linearity, rollout and saliency analyses.
    Analyze(AnalyzeArgs),
    /// Render one clip's saliency and mask.
    VizMask {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        clip: u32,
        #[arg(long, value_parser = parse_strategy)]
        strategy: MaskStrategy,
        /// Pixel rectangle x0,y0,x1,y1 whose motion energy is zeroed first.
        #[arg(long, value_parser = parse_region)]
        zero_region: Option<Region>,
    },
    /// Gradient and oracle suites.
    Selfcheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        /// Largest accepted finite-difference relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Print the default configuration.
    Init,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Needed by --rollout.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub linearity: bool,
    #[arg(long)]
    pub rollout: bool,
    #[arg(long)]
    pub dispersion: bool,
    /// Sparsified saliency map of this clip.
    #[arg(long)]
    pub saliency: Option<u32>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_probe(s: &str) -> std::result::Result<ProbeKind, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_strategy(s: &str) -> std::result::Result<MaskStrategy, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_region(s: &str) -> std::result::Result<Region, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

/// What a successful command reports back to `run`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    SelfcheckFailed,
}

impl GlobalArgs {
    pub fn run_config(&self) -> Result<RunConfig> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let cfg = match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn workers(&self) -> usize {
        self.workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    commands::dispatch(cli)
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_ERROR,
            };
        }
    };
    match execute(&cli) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::SelfcheckFailed) => EXIT_SELFCHECK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
