//! Command-line front end: matching, completion, training, mask auditing and
//! export. Every command writes JSON reports described by the schemas under
//! `docs/schemas`.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

mod audit;
pub mod bundled;
mod complete;
mod export;
mod matching;
pub mod report;
mod train;

pub use report::SCHEMA_VERSION;

/// Environment variable read for the log filter (`error` .. `trace`).
pub const LOG_ENV: &str = "BRICKFILL_LOG";

#[derive(Debug, Parser)]
#[command(name = "brickfill", version, about = "Infer and complete incomplete brick assemblies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match an incomplete structure against a library of complete objects.
    Match(MatchArgs),
    /// Match (unless the scenario pins a target) and build until done.
    Complete(CompleteArgs),
    /// Train a masked PPO policy on a scenario.
    Train(TrainArgs),
    /// Compare the incremental mask with the brute-force reference.
    MaskAudit(AuditArgs),
    /// Convert an assembly or voxel file to PLY or voxel JSON.
    Export(ExportArgs),
}

#[derive(Debug, clap::Args)]
pub struct MatchArgs {
    /// Voxel or assembly JSON with the incomplete structure.
    #[arg(long)]
    pub incomplete: PathBuf,
    /// Library manifest.
    #[arg(long)]
    pub library: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, requires = "beta")]
    pub alpha: Option<f64>,
    #[arg(long, requires = "alpha")]
    pub beta: Option<f64>,
    /// Output directory for `match_report.json` and `aligned_target.json`.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// `greedy`, `random`, or the path of a policy checkpoint.
    #[arg(long, default_value = "greedy")]
    pub policy: String,
    /// Sample from a checkpoint policy instead of taking its argmax.
    #[arg(long)]
    pub sample: bool,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Training configuration JSON; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write a numbered checkpoint every this many updates.
    #[arg(long, default_value_t = 10)]
    pub checkpoint_every: u64,
    /// Greedy and random-valid baselines plus the trained policy are
    /// evaluated on this many episodes at the end.
    #[arg(long, default_value_t = 20)]
    pub eval_episodes: usize,
}

#[derive(Debug, clap::Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Ply,
    Voxel,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub assembly: PathBuf,
    #[arg(long, value_enum)]
    pub format: ExportFormat,
    /// Defaults to the input path with a `.ply` or `.voxel.json` suffix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Bad arguments detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// The command ran but its report records a failure.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ReportedFailure(pub String);

/// 0 success, 1 runtime failure, 2 usage or configuration error.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use brickfill::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io { .. }
                | E::Json { .. }
                | E::Config(_)
                | E::UnknownBrickType(_)
                | E::ShapeMismatch(..)
                | E::ActionComponent(_)
                | E::UngroundedEntry(_)
                | E::Checkpoint(_) => 2,
                _ => 1,
            };
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Match(a) => matching::run(&a),
        Command::Complete(a) => complete::run(&a),
        Command::Train(a) => train::run(&a),
        Command::MaskAudit(a) => audit::run(&a),
        Command::Export(a) => export::run(&a),
    }
}

fn ensure_dir(dir: &std::path::Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        brickfill::Error::Io {
            path: dir.display().to_string(),
            source: e,
        }
        .into()
    })
}
