use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "rotcomp", version, about = "Estimate and undo in-plane image rotations")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic upright scenes into a dataset directory.
    GenData(GenDataArgs),
    /// Train a scorer on the upright images of a dataset directory.
    Train(TrainArgs),
    /// Estimate and undo the rotation of one image.
    Compensate(CompensateArgs),
    /// Rotate every dataset image through a set of angles and measure
    /// how well compensation recovers them.
    Eval(EvalArgs),
    /// Median score against rotation angle over a dataset.
    Curve(CurveArgs),
    /// Mean average precision of retrieval under query rotation.
    Retrieval(RetrievalArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub scenes: usize,
    #[arg(long, default_value_t = 64)]
    pub side: usize,
    /// Render the scenes as this many groups of related variants and write
    /// `groups.csv` for retrieval.
    #[arg(long)]
    pub groups: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Tnet,
    Hogsvm,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Arch::Tnet)]
    pub arch: Arch,
    /// Label rotations within the tolerance of zero as upright too.
    #[arg(long)]
    pub tolerant: bool,
    #[arg(long, default_value_t = 10.0)]
    pub tolerance_deg: f64,
    /// Random rotations added per upright image.
    #[arg(long, default_value_t = 5)]
    pub rotations: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub input_side: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    /// Conv stages as `filters:kernel:stride:padding:pool`, comma-separated.
    #[arg(long, default_value = "8:5:2:2:2,16:5:1:2:2")]
    pub layers: String,
    /// Skip pooling after the second stage, doubling the template side.
    #[arg(long)]
    pub no_pool2: bool,
    /// L2 strength of the SVM (hogsvm only).
    #[arg(long, default_value_t = 1e-4)]
    pub svm_l2: f64,
    /// SVM epochs (hogsvm only).
    #[arg(long, default_value_t = 20)]
    pub svm_epochs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 30)]
    pub max_evals: usize,
    #[arg(long, default_value_t = 180)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0.01)]
    pub xi: f64,
    #[arg(long, default_value_t = 30.0)]
    pub lengthscale: f64,
    #[arg(long, default_value_t = 0.25)]
    pub signal_variance: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub noise_variance: f64,
}

#[derive(Debug, Args)]
pub struct CompensateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the search trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated degrees; `±a` expands to `a,-a`.
    #[arg(long, default_value = "0,±45,±90,±135,180")]
    pub angles: String,
    #[arg(long)]
    pub hist: Option<PathBuf>,
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Raw,
    Compensated,
    Maxpooled,
    Corotated,
}

#[derive(Debug, Args)]
pub struct RetrievalArgs {
    /// `hog`, or a directory of precomputed `<key>.vec` descriptors.
    #[arg(long, default_value = "hog")]
    pub features: String,
    /// Dataset directory (with manifest) or a plain directory of images.
    #[arg(long)]
    pub dataset: PathBuf,
    /// CSV of `query_filename,relevant_filename` pairs.
    #[arg(long)]
    pub groups: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Raw)]
    pub mode: Mode,
    #[arg(long, default_value = "0,±45,±90,±135,180")]
    pub angles: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Scorer for the compensated and maxpooled modes.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchArgs,
}
