use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use entseg::evaluator::EvalMode;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "entseg",
    version,
    about = "Entity segmentation evaluation and dataset toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a COCO-panoptic dataset into the entity format.
    Convert(ConvertArgs),
    /// Concatenate entity datasets.
    Merge(MergeArgs),
    /// Draw a seeded sample of images from an entity dataset.
    Presample(PresampleArgs),
    /// Turn scored, possibly overlapping masks into non-overlapping ID maps.
    Resolve(ResolveArgs),
    /// Evaluate predictions against an entity dataset.
    Eval(EvalArgs),
    /// Run the gradient and decomposition checks of the loss references.
    Losscheck(LosscheckArgs),
    /// Evaluate a seeded synthetic dataset and report throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub panoptic_json: PathBuf,
    #[arg(long)]
    pub png_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Tag stored on every image; defaults to the JSON file stem.
    #[arg(long)]
    pub source_dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresampleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    /// Scored prediction JSON, or a resolved prediction directory.
    #[arg(long)]
    pub pred: PathBuf,
    /// Output directory for ID PNGs and the score table.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.6)]
    pub nms_iou: f64,
    /// Skip box NMS before the per-pixel argmax.
    #[arg(long)]
    pub no_nms: bool,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Strict mask AP; predictions must not overlap.
    Entity,
    /// Mask AP on raw, possibly overlapping masks.
    Tolerant,
    /// Panoptic quality.
    Pq,
    /// Box AP.
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    #[value(alias = "agnostic")]
    CategoryAgnostic,
    #[value(alias = "oriented")]
    CategoryOriented,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::CategoryAgnostic => EvalMode::CategoryAgnostic,
            Mode::CategoryOriented => EvalMode::CategoryOriented,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Scored prediction JSON, or a resolved prediction directory.
    #[arg(long)]
    pub pred: PathBuf,
    /// Entity dataset JSON.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub iou_thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub max_dets: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub recall_points: Option<usize>,
    #[arg(long)]
    pub small_max: Option<u64>,
    #[arg(long)]
    pub large_min: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Report JSON destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LosscheckArgs {
    /// Loss config TOML; the bundled defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub fixtures: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 5000)]
    pub images: usize,
    #[arg(long, default_value_t = 480)]
    pub height: usize,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 12)]
    pub entities: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
