use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod run;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_MISSING_FILE: u8 = 3;
pub const EXIT_CHECKPOINT: u8 = 4;
pub const EXIT_DATA: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "mucos", version, about = "Density-sampled context knowledge graph completion")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key=value config file; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// full | sampled
    #[arg(long, global = true)]
    pub mode: Option<String>,

    /// entities kept per head/tail context
    #[arg(long, global = true)]
    pub n: Option<usize>,

    /// pairs kept per relation context
    #[arg(long, global = true)]
    pub k: Option<usize>,

    /// relation | tail
    #[arg(long, global = true)]
    pub task: Option<String>,

    /// general | drug-target
    #[arg(long, global = true)]
    pub subtask: Option<String>,

    /// extra config override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// base directory for run outputs
    #[arg(long, global = true, env = "MUCOS_OUT", default_value = "runs")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load triple files and store them as a dataset directory
    Ingest(IngestArgs),
    /// Counts and average density/appearance
    Stats { dataset: PathBuf },
    /// Print the contexts built for one query, e.g. `A r1 ?`
    Sample {
        dataset: PathBuf,
        #[arg(required = true, num_args = 1..=3)]
        query: Vec<String>,
    },
    /// Train a model and write the best checkpoint
    Train { dataset: PathBuf },
    /// Rank a split with a trained checkpoint
    Eval(EvalArgs),
    /// Analytical and measured context-construction cost
    Bench(BenchArgs),
    /// Generate a seeded synthetic dataset
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// train triples, or the only file
    pub train: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// field separator: tab, comma, space or a single character
    #[arg(long, default_value = "tab")]
    pub delimiter: String,
    /// comma-separated drug-target relation labels
    #[arg(long, value_delimiter = ',')]
    pub drug_target: Vec<String>,
    /// dataset directory (default: `dataset/` inside the run directory)
    #[arg(long)]
    pub dest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// train | valid | test
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// dataset directory; the published reference statistics are used when omitted
    pub dataset: Option<PathBuf>,
    #[arg(long, requires = "avg_appearance", conflicts_with = "dataset")]
    pub avg_density: Option<String>,
    #[arg(long, requires = "avg_density", conflicts_with = "dataset")]
    pub avg_appearance: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    #[arg(long, default_value_t = 5)]
    pub repetitions: usize,
    /// skip the wall-clock measurement
    #[arg(long)]
    pub analytical_only: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub entities: usize,
    #[arg(long)]
    pub relations: usize,
    #[arg(long)]
    pub triples: usize,
    /// comma-separated relation labels (`r0`, `r1`, ...) to mark as drug-target
    #[arg(long, value_delimiter = ',')]
    pub drug_target: Vec<String>,
    #[arg(long)]
    pub dest: Option<PathBuf>,
}

/// The error chain joined by `: `, skipping causes already spelled out.
fn render(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
