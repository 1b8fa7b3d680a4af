use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flame_core::dataset::AugmentKind;
use flame_core::graph::Variant;

#[derive(Debug, Parser)]
#[command(name = "flamedet", version, about = "Lightweight flame detector: analysis, inference, evaluation and dataset tools")]
pub struct Cli {
    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Square network input size.
    #[arg(long, global = true, default_value_t = 640)]
    pub imgsz: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer parameter and FLOP table.
    Analyze(AnalyzeArgs),
    /// Write seeded initial weights for a model.
    Init(InitArgs),
    /// Detect on one PPM image.
    Infer(InferArgs),
    /// Score prediction files against a labelled split.
    Eval(EvalArgs),
    /// Wall-clock latency and FPS.
    Bench(BenchArgs),
    /// Dataset tooling.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Evaluate one loss term.
    Loss(LossArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    V8n,
    V8s,
    V8m,
    Light,
}

impl From<ModelArg> for Variant {
    fn from(m: ModelArg) -> Variant {
        match m {
            ModelArg::V8n => Variant::V8n,
            ModelArg::V8s => Variant::V8s,
            ModelArg::V8m => Variant::V8m,
            ModelArg::Light => Variant::Light,
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1)]
    pub nc: usize,
    /// Also write the key:value report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1)]
    pub nc: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value_t = flame_core::postprocess::DEFAULT_CONF)]
    pub conf: f64,
    #[arg(long, default_value_t = flame_core::postprocess::DEFAULT_IOU)]
    pub iou: f64,
    /// Prediction file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Copy of the image with red box outlines.
    #[arg(long)]
    pub draw: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of `<stem>.txt` prediction files.
    #[arg(long)]
    pub pred: PathBuf,
    /// Dataset root holding images/ and labels/.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    /// Input image; a seeded synthetic one is used when absent.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Partition a flat image/label pool into train/val/test.
    Split(SplitArgs),
    /// Write augmented copies of every image.
    Augment(AugmentArgs),
    /// Check layout, pairing and label syntax.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Output dataset root.
    #[arg(long)]
    pub out: PathBuf,
    /// train:val:test
    #[arg(long, default_value = "10:1:1")]
    pub ratio: String,
    /// Print the manifest without copying files.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AugmentArg {
    Hflip,
    Crop,
    Occlude,
    Noise,
    Brightness,
}

impl From<AugmentArg> for AugmentKind {
    fn from(a: AugmentArg) -> AugmentKind {
        match a {
            AugmentArg::Hflip => AugmentKind::Hflip,
            AugmentArg::Crop => AugmentKind::Crop,
            AugmentArg::Occlude => AugmentKind::Occlude,
            AugmentArg::Noise => AugmentKind::Noise,
            AugmentArg::Brightness => AugmentKind::Brightness,
        }
    }
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Writes `<out>/images` and `<out>/labels`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hflip,crop,occlude,noise,brightness")]
    pub ops: Vec<AugmentArg>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dataset root.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub root: Option<PathBuf>,
    /// key:value dataset config naming the root.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossKind {
    Ce,
    Iou,
    Giou,
    Diou,
    Ciou,
    Eiou,
    Dfl,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    #[arg(long, value_enum)]
    pub kind: LossKind,
    /// Predicted box `x1,y1,x2,y2`.
    #[arg(long)]
    pub pred: Option<String>,
    /// Ground-truth box `x1,y1,x2,y2`.
    #[arg(long)]
    pub gt: Option<String>,
    /// Cross-entropy label.
    #[arg(long)]
    pub y: Option<f64>,
    /// Cross-entropy predicted probability.
    #[arg(long)]
    pub y_hat: Option<f64>,
    /// DFL bin probabilities, comma-separated.
    #[arg(long)]
    pub dist: Option<String>,
    /// DFL target distance in bins.
    #[arg(long)]
    pub target: Option<f64>,
}
