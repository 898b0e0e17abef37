//! The `gasp` command-line tool.
//!
//! Exit codes are a stable contract: 0 success, 1 usage, 2 data or I/O
//! error, 3 numeric failure or failed verification. Progress goes to
//! standard error and artifacts only to files under the output path.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

use config::Kind;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "gasp", version, about = "Learn distributions of functions from point-cloud data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one function to one datapoint.
    Fit(FitArgs),
    /// Train the adversarial model on a directory of datapoints.
    Train(TrainArgs),
    /// Draw functions from a trained model and render them on grids.
    Sample(SampleArgs),
    /// Check the Lipschitz bounds of the set discriminator numerically.
    Verify(VerifyArgs),
    /// Write the random-phase sinusoid dataset as CSV point clouds.
    GenToy(GenToyArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// PPM, PGM, CSV point cloud or voxel text file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Number of Fourier frequencies.
    #[arg(long, default_value_t = 128)]
    pub m: usize,
    /// Fourier scale; defaults by data kind (none for voxels).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Feed raw coordinates to the network.
    #[arg(long, conflicts_with = "sigma")]
    pub no_encoding: bool,
    #[arg(long, value_delimiter = ',', default_value = "128,128,128")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of datapoints of one kind.
    #[arg(long)]
    pub data: PathBuf,
    /// Data kind; may instead come from `[data] kind` in the config file.
    #[arg(long)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub k_subsample: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// INI-style settings file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a training checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Print a progress line every this many steps.
    #[arg(long, default_value_t = 10)]
    pub log_every: u64,
    /// Output directory for checkpoints and the loss CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Grid side lengths; every sample is rendered at each.
    #[arg(long, value_delimiter = ',', required = true)]
    pub resolution: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Occupancy threshold on the `[0, 1]` scale for voxel output.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Random instances per lemma.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Random pairs per empirical Lipschitz estimate.
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long, default_value_t = 512)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Fit(a) => commands::fit(a),
        Command::Train(a) => commands::train(a),
        Command::Sample(a) => commands::sample(a),
        Command::Verify(a) => commands::verify(a),
        Command::GenToy(a) => commands::gen_toy(a),
    }
}
