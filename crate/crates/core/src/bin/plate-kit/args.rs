use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "plate-kit", version, about = "License plate dataset and evaluation tooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every label, detection and image file under a directory.
    Validate(ValidateArgs),
    /// Filter detector output into pseudo-labels.
    Filter(FilterArgs),
    /// Filter detector output and merge it with human labels.
    Merge(MergeArgs),
    /// Average precision of detections against labels.
    EvalDet(EvalDetArgs),
    /// Character error rate and recall of plate readings.
    EvalRec(EvalRecArgs),
    /// Generate a labeled synthetic plate dataset.
    Synth(SynthArgs),
}

fn unit_closed(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is outside (0, 1]"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be a positive number"))
    }
}

fn finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} is not finite"))
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Directory (or single file) to check.
    pub root: PathBuf,
    /// Write the JSON findings report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    /// Directory of images; file stems are the image ids.
    #[arg(long)]
    pub images: PathBuf,
    /// Image file extension to index.
    #[arg(long, default_value = "ppm")]
    pub image_ext: String,
    /// Directory of `<id>.txt` detection files.
    #[arg(long)]
    pub detections: PathBuf,
    /// Output directory for merged `<id>.txt` label files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.35, value_parser = unit_closed)]
    pub min_confidence: f64,
    #[arg(long, default_value_t = 0.5, value_parser = unit_open)]
    pub suppression_iou: f64,
    /// Keep at most this many detections per image.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_per_image: Option<u64>,
    /// Write the JSON pass report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[command(flatten)]
    pub filter: FilterArgs,
    /// Directory of human `<id>.txt` label files.
    #[arg(long)]
    pub labels: PathBuf,
    /// A pseudo-label overlapping a human label of its category at or above
    /// this IoU is dropped.
    #[arg(long, default_value_t = 0.5, value_parser = unit_open)]
    pub precedence_iou: f64,
}

#[derive(Debug, Args)]
pub struct EvalDetArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long, default_value = "ppm")]
    pub image_ext: String,
    #[arg(long)]
    pub detections: PathBuf,
    /// Directory of ground-truth `<id>.txt` label files.
    #[arg(long)]
    pub labels: PathBuf,
    /// Comma-separated IoU thresholds; defaults to 0.50:0.05:0.95.
    #[arg(long, value_delimiter = ',', value_parser = unit_open)]
    pub iou_thresholds: Vec<f64>,
    /// Evaluate a single category.
    #[arg(long)]
    pub category: Option<u32>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["labels", "truth"])))]
pub struct EvalRecArgs {
    /// Directory of per-plate character label files (ground truth).
    #[arg(long, requires = "detections", conflicts_with_all = ["truth", "pred"])]
    pub labels: Option<PathBuf>,
    /// Directory of per-plate character detection files (predictions).
    #[arg(long, requires = "labels")]
    pub detections: Option<PathBuf>,
    /// Transcript list, one `<id> <TEXT>` per line (ground truth).
    #[arg(long, requires = "pred")]
    pub truth: Option<PathBuf>,
    /// Transcript list, one `<id> <TEXT>` per line (predictions).
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5, value_parser = positive)]
    pub row_gap_factor: f64,
    /// Symbols in category order.
    #[arg(long, default_value = plate_kit::annotation::DEFAULT_ALPHABET)]
    pub alphabet: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the confusion matrix as CSV here.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub min_len: usize,
    #[arg(long, default_value_t = 7)]
    pub max_len: usize,
    /// Rotation is drawn from `[-max, max]` degrees.
    #[arg(long, default_value_t = 8.0, value_parser = finite)]
    pub max_rotation: f64,
    /// Largest corner shift as a fraction of the plate side.
    #[arg(long, default_value_t = 0.06, value_parser = finite)]
    pub perspective: f64,
    #[arg(long, default_value_t = 0.8, value_parser = finite)]
    pub gain_min: f64,
    #[arg(long, default_value_t = 1.2, value_parser = finite)]
    pub gain_max: f64,
    #[arg(long, default_value_t = -20.0, value_parser = finite, allow_negative_numbers = true)]
    pub bias_min: f64,
    #[arg(long, default_value_t = 20.0, value_parser = finite, allow_negative_numbers = true)]
    pub bias_max: f64,
    /// Compose plates without any augmentation.
    #[arg(long)]
    pub no_augment: bool,
    /// Generate on one thread.
    #[arg(long)]
    pub sequential: bool,
    /// Directory of `<char>.ppm` glyph crops; the built-in font is used when absent.
    #[arg(long)]
    pub glyphs: Option<PathBuf>,
    /// Pixel size of one built-in font cell.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
    pub glyph_cell: u32,
}
