mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "segfuse", version, about = "Segmentation-assisted projector fusion toolkit")]
pub struct Cli {
    /// JSON run configuration, or a manifest from an earlier run
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// output directory; receives manifest.json and every artifact
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_parser = ["desk", "paper"])]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or read) a synthetic dataset and train a model in two stages
    Train(TrainArgs),
    /// Generate reports for the test split and score them
    Eval(EvalArgs),
    /// Evaluate one checkpoint with sorted and class-shuffled masks across seeds
    AblateShuffle(AblateArgs),
    /// Turn a JSONL report corpus into single-turn chat records
    ConvertVqa(ConvertArgs),
    /// Welch comparisons between groups of run scores
    Stats(StatsArgs),
    /// Check report findings against a segmentation stack
    Ground(GroundArgs),
    /// Run every fusion variant on a small batch and print shapes and budgets
    DemoFusion(DemoArgs),
    /// Finite-difference check of each variant through the decoder loss
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// read this dataset instead of generating one
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(long)]
    pub greedy: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// reorder the mask classes of every test sample with this seed
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[command(flatten)]
    pub gen: GenArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub gen: GenArgs,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// defaults to `<out>/chat.jsonl`
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON prompt set replacing the bundled templates
    #[arg(long)]
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    #[arg(long, conflicts_with = "report_file", required_unless_present = "report_file")]
    pub report: Option<String>,
    #[arg(long)]
    pub report_file: Option<PathBuf>,
    /// SSTK mask stack
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// smallest mask area, as a fraction of the image, counted as present
    #[arg(long, default_value_t = segfuse::segstack::DEFAULT_MIN_AREA_FRACTION)]
    pub min_area: f64,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// one variant name, or every variant when absent
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long)]
    pub variant: Option<String>,
    /// compare this many random entries per tensor; every entry when absent
    #[arg(long)]
    pub per_param: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_IO: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
        if let Some(segfuse::Error::Io { .. }) = cause.downcast_ref::<segfuse::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_VALIDATION
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
