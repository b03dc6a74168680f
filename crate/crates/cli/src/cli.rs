use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{RunConfig, ScorerKind};

#[derive(Debug, Parser)]
#[command(name = "vistrain", version, about = "Pseudo-label curation rounds for video instance segmentation")]
pub struct Cli {
    /// TOML file with run settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a round-0 state file, optionally seeded with labeled videos.
    Init(InitArgs),
    /// Curate a detection dump and fold it into the state.
    Round(RoundArgs),
    /// Emit a stream of training clip plans.
    Sample(SampleArgs),
    /// Score predictions or stored pseudo-labels against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic ground-truth file.
    MockGt(MockGtArgs),
    /// Write a synthetic detection dump from ground truth.
    MockDump(MockDumpArgs),
    /// Report which predictions the loss gate would zero.
    DroplossAudit(AuditArgs),
    /// Threshold, round and scorer sweeps over a sequence of dumps.
    Report(ReportArgs),
}

/// Run settings that can override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerKind>,
    /// Quality threshold for frame selection.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub conf_floor: Option<f64>,
    /// Keep only scores strictly above the floor.
    #[arg(long)]
    pub conf_floor_exclusive: bool,
    #[arg(long)]
    pub nms_iou: Option<f64>,
    #[arg(long)]
    pub drop_iou: Option<f64>,
    /// Do not ask the trainer to reset weights between rounds.
    #[arg(long)]
    pub no_reset: bool,
}

impl Overrides {
    pub fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(v) = self.scorer {
            cfg.scorer = v;
        }
        if let Some(v) = self.tau {
            cfg.tau_th = v;
        }
        if let Some(v) = self.conf_floor {
            cfg.conf_floor = v;
        }
        if let Some(v) = self.nms_iou {
            cfg.nms_iou = v;
        }
        if let Some(v) = self.drop_iou {
            cfg.drop_iou = v;
        }
        cfg.conf_floor_exclusive |= self.conf_floor_exclusive;
        if self.no_reset {
            cfg.reset = false;
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// Ground-truth file whose videos become the labeled base set.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RoundArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub dump: PathBuf,
    /// Ground truth, required by the oracle scorer.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Defaults to `<state>.round<k>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub batches: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Detection dump to score.
    #[arg(long, conflicts_with = "state")]
    pub preds: Option<PathBuf>,
    /// State file whose pseudo-labels are scored.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Text table path.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// CSV with `quality` and `true_iou` columns to rank-correlate.
    #[arg(long)]
    pub spearman: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MockGtArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub videos: usize,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub height: u32,
    #[arg(long, default_value_t = 64)]
    pub width: u32,
    #[arg(long, default_value_t = 3)]
    pub max_objects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Video id prefix.
    #[arg(long, default_value = "video")]
    pub prefix: String,
}

#[derive(Debug, Args)]
pub struct MockDumpArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub iou_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub iou_hi: f64,
    /// Expected false positives per video.
    #[arg(long, default_value_t = 1.0)]
    pub fp_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    pub miss_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dup_rate: f64,
    /// Stddev of the noise on confidence and predicted IoU.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IouModeArg {
    Track,
    Frame,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Defaults to the configured drop threshold.
    #[arg(long)]
    pub tau_iou: Option<f64>,
    #[arg(long, value_enum, default_value = "track")]
    pub iou_mode: IouModeArg,
    /// Per-prediction CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// One dump per round, in order.
    #[arg(long, required = true)]
    pub dump: Vec<PathBuf>,
    /// Labeled videos to start from.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, default_value = "report")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}
