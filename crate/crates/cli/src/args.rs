use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rfae::pipeline::Extension;
use rfae::prototypes::PrototypeCount;

#[derive(Debug, Parser)]
#[command(name = "rfae", version, about = "Random-forest autoencoder embeddings")]
pub struct Cli {
    /// Worker threads; results do not depend on this
    #[arg(long, global = true, env = "RFAE_THREADS", value_parser = at_least_one)]
    pub threads: Option<usize>,
    /// Only log warnings and errors
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the branching-tree dataset as train/test CSV files
    GenTree(GenTreeArgs),
    /// Fit a model on a labelled training CSV
    Fit(FitArgs),
    /// Embed new rows with a fitted model
    Transform(TransformArgs),
    /// Score out-of-sample embeddings on a labelled test CSV
    Evaluate(EvaluateArgs),
    /// Draw a 2-d embedding as an SVG scatter plot
    Plot(PlotArgs),
}

fn unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a number in [0, 1], got {s:?}")),
    }
}

fn open_unit_interval(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a number in (0, 1), got {s:?}")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn prototype_count(s: &str) -> Result<PrototypeCount, String> {
    match s.parse::<PrototypeCount>() {
        Ok(PrototypeCount::Absolute(0)) => Err("prototype count must be at least 1".into()),
        Ok(c) => Ok(c),
        Err(e) => Err(e.to_string()),
    }
}

fn extension(s: &str) -> Result<Extension, String> {
    s.parse::<Extension>().map_err(|e| e.to_string())
}

/// Where the geometric target comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetArg {
    Diffusion,
    File(PathBuf),
}

fn target(s: &str) -> Result<TargetArg, String> {
    if s == "diffusion" {
        return Ok(TargetArg::Diffusion);
    }
    match s.strip_prefix("file:") {
        Some(p) if !p.is_empty() => Ok(TargetArg::File(PathBuf::from(p))),
        _ => Err(format!("expected `diffusion` or `file:<path>`, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct GenTreeArgs {
    /// Directory receiving train.csv and test.csv
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of branches; each adds four dimensions
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    pub branches: u64,
    /// Points per branch
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub branch_length: u64,
    /// Copies placed at every branch endpoint and branching point
    #[arg(long, default_value_t = 40)]
    pub extra_points: usize,
    /// Standard deviation of the Gaussian noise
    #[arg(long, default_value_t = 7.0, value_parser = non_negative)]
    pub noise_sd: f64,
    /// Append uniform noise columns so that signal:noise dimensions = SNR
    #[arg(long, value_parser = positive)]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 0.2, value_parser = open_unit_interval)]
    pub test_fraction: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training CSV with a header row
    pub train: PathBuf,
    /// Output model file
    #[arg(long, default_value = "model.rfae")]
    pub model: PathBuf,
    /// Label column, by header name or zero-based position
    #[arg(long, default_value = "label")]
    pub label_column: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight of the reconstruction loss
    #[arg(long, default_value_t = 0.01, value_parser = unit_interval)]
    pub lambda: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 512, value_parser = at_least_one)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3, value_parser = positive)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5, value_parser = non_negative)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 500, value_parser = at_least_one)]
    pub n_trees: usize,
    /// Integer count or a fraction of the training size
    #[arg(long, default_value = "0.1", value_parser = prototype_count)]
    pub n_prototypes: PrototypeCount,
    /// `diffusion` or `file:<path>` to a CSV of target coordinates
    #[arg(long, default_value = "diffusion", value_parser = target)]
    pub target: TargetArg,
    /// Hidden widths of the encoder; the decoder mirrors them
    #[arg(long, default_value = "800,400,100", value_delimiter = ',', value_parser = at_least_one)]
    pub hidden: Vec<usize>,
    /// Keep hidden widths as given instead of capping them at 4 x prototypes
    #[arg(long)]
    pub no_clamp_hidden: bool,
    #[arg(long, default_value_t = 2, value_parser = at_least_one)]
    pub latent_dim: usize,
    /// Diffusion steps of the built-in target embedder
    #[arg(long, default_value_t = 16, value_parser = at_least_one)]
    pub diffusion_t: usize,
    /// Skip the kernel-extension baselines
    #[arg(long)]
    pub no_kernel_extensions: bool,
    /// Write intermediate artifacts here
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    /// Also dump the N x N proximity, transition and dissimilarity matrices
    #[arg(long, requires = "dump_dir")]
    pub dump_proximities: bool,
    /// Write the per-epoch loss history as CSV
    #[arg(long)]
    pub loss_history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    /// CSV of rows to embed; a label column, if present, is ignored
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// rfae, least-squares, nystrom or linear-reconstruction
    #[arg(long, default_value = "rfae", value_parser = extension)]
    pub extension: Extension,
    /// Column to drop if present
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Output CSV; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Labelled test CSV
    pub test: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Methods to score; all available ones when omitted
    #[arg(long = "extension", value_parser = extension)]
    pub extensions: Vec<Extension>,
    /// Seed of the feature perturbations
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; standard output when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Embedding CSV with z1 and z2 columns
    pub embedding: PathBuf,
    /// CSV holding the labels, row-aligned with the embedding
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    #[arg(long, default_value = "embedding.svg")]
    pub out: PathBuf,
    #[arg(long)]
    pub title: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn target_parsing() {
        assert_eq!(target("diffusion"), Ok(TargetArg::Diffusion));
        assert_eq!(target("file:a/b.csv"), Ok(TargetArg::File("a/b.csv".into())));
        assert!(target("file:").is_err());
        assert!(target("phate").is_err());
    }

    #[test]
    fn value_checks() {
        assert!(unit_interval("1.5").is_err());
        assert_eq!(unit_interval("0"), Ok(0.0));
        assert!(open_unit_interval("1").is_err());
        assert!(at_least_one("0").is_err());
        assert!(prototype_count("0").is_err());
    }
}
