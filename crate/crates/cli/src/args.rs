use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "rddpm",
    version,
    about = "Diffusion-based despeckling: synthesize data, train, restore, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Synthesize clean/degraded image pairs plus a dataset manifest
    MakeDataset(MakeDatasetArgs),
    /// Train the convolutional noise predictor on a manifest dataset
    Train(TrainArgs),
    /// Restore one image with the regional reverse chain
    Despeckle(DespeckleArgs),
    /// Compute quality metrics for a restored image
    Eval(EvalArgs),
    /// Print the variance schedule as CSV
    ScheduleDump(ScheduleDumpArgs),
    /// Monte-Carlo check of the sampler against the analytic prior
    OracleCheck(OracleCheckArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Ddpm,
    Ddim,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseKindArg {
    Gaussian,
    Speckle,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Png,
    Pgm,
    Raw,
}

#[derive(Args)]
pub struct MakeDatasetArgs {
    /// Run configuration file providing defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides config and RDDPM_OUT_DIR)
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Number of image pairs to synthesize
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Side length of the square images
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Degradation model applied to the clean images
    #[arg(long, value_enum, default_value_t = NoiseKindArg::Speckle)]
    pub kind: NoiseKindArg,
    /// Gaussian noise standard deviation (with --kind gaussian)
    #[arg(long, default_value_t = 0.2)]
    pub sigma: f64,
    /// Number of looks (with --kind speckle)
    #[arg(long, default_value_t = 4)]
    pub looks: u32,
    /// Pixel format for the written images
    #[arg(long, value_enum, default_value_t = FormatArg::Raw)]
    pub format: FormatArg,
    /// Additionally cut the pairs into training patches of this side length
    #[arg(long)]
    pub patch: Option<usize>,
    /// Stride between patches (defaults to the patch side)
    #[arg(long)]
    pub patch_stride: Option<usize>,
    /// Base seed for textures and degradations
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace files that already exist
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run configuration file providing defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest of clean/degraded pairs
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory for weights and the loss log
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Optimizer iterations
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Images per optimizer step
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seed for noise draws and batch selection
    #[arg(long)]
    pub seed: Option<u64>,
    /// Resume from an existing weights file instead of a fresh model
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub schedule: ScheduleOverrides,
    /// Replace files that already exist
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args)]
pub struct DespeckleArgs {
    /// Run configuration file providing defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input image to restore (png, pgm, or raw float)
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output path for the restored image
    #[arg(long)]
    pub out: PathBuf,
    /// Trained weights; without them the analytic Gaussian prior is used
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Prior mean for the analytic model
    #[arg(long, default_value_t = 0.0)]
    pub prior_mean: f64,
    /// Prior variance for the analytic model
    #[arg(long, default_value_t = 0.25)]
    pub prior_var: f64,
    /// Window side length m
    #[arg(long)]
    pub window: Option<usize>,
    /// Window stride n (must divide m)
    #[arg(long)]
    pub stride: Option<usize>,
    /// Parallel window evaluators (0 = all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    /// Reverse steps; fewer than the schedule length implies DDIM
    #[arg(long)]
    pub steps: Option<usize>,
    /// Sampler kind (inferred from --steps when omitted)
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    /// DDIM stochasticity in [0, 1]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Seed for the whole chain
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains to average (posterior mean estimate); 1 keeps the
    /// single posterior draw
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Clean reference: prints a metric report after restoring
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// ENL region as row,col,height,width (with --reference)
    #[arg(long)]
    pub roi: Option<String>,
    #[command(flatten)]
    pub schedule: ScheduleOverrides,
    /// Replace the output file if it exists
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Restored image under evaluation
    #[arg(long)]
    pub restored: PathBuf,
    /// Clean reference enabling PSNR/SSIM/EPI
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// ENL region as row,col,height,width
    #[arg(long)]
    pub roi: Option<String>,
    /// Window side for the seam score grid
    #[arg(long)]
    pub window: Option<usize>,
    /// Stride paired with --window
    #[arg(long)]
    pub stride: Option<usize>,
    /// Print one CSV header and row instead of the text report
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args)]
pub struct ScheduleDumpArgs {
    /// Schedule length
    #[arg(long = "T", visible_alias = "t-steps", default_value_t = 1000)]
    pub t_steps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub beta_start: f64,
    #[arg(long, default_value_t = 0.02)]
    pub beta_end: f64,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace the output file if it exists
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args)]
pub struct OracleCheckArgs {
    /// Number of independent reverse chains
    #[arg(long, default_value_t = 1000)]
    pub chains: usize,
    /// Schedule length to run each chain over
    #[arg(long, default_value_t = 1000)]
    pub t: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub beta_start: f64,
    #[arg(long, default_value_t = 0.02)]
    pub beta_end: f64,
    /// Prior mean the sampler should reproduce
    #[arg(long, default_value_t = 0.3)]
    pub prior_mean: f64,
    /// Prior variance the sampler should reproduce
    #[arg(long, default_value_t = 0.04)]
    pub prior_var: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct ScheduleOverrides {
    /// Schedule length override
    #[arg(long)]
    pub t_steps: Option<usize>,
    /// First beta override
    #[arg(long)]
    pub beta_start: Option<f64>,
    /// Last beta override
    #[arg(long)]
    pub beta_end: Option<f64>,
}
