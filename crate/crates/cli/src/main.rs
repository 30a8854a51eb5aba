//! `serinv`: run-directory pipeline over the serinv-core library.
//!
//! ```text
//! serinv --run-dir run gen --n-tables 200
//! serinv --run-dir run encode
//! serinv --run-dir run train --steps 2000 --batch-size 64
//! serinv --run-dir run eval --checkpoint run/ckpt/adapter.ckpt
//! ```
//!
//! Layout: `corpus.txt`, `queries.txt`, `stores/<name>.emb`,
//! `ckpt/adapter.ckpt`, `reports/*.csv`, `train_log.csv`.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numeric error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{List, Settings};
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "serinv", version, about = "Table serialization sensitivity pipeline")]
struct Cli {
    /// Run directory holding every artifact.
    #[arg(long, global = true, default_value = ".")]
    run_dir: PathBuf,
    /// `key = value` file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and its queries.
    Gen(GenArgs),
    /// Serialize and embed the corpus with the toy encoder.
    Encode(EncodeArgs),
    /// Train the residual adapter on a store.
    Train(TrainArgs),
    /// Rank queries against a store and write report CSVs.
    Eval(EvalArgs),
    /// Decompose per-format shifts from a reference centroid.
    Shift(ShiftArgs),
    /// Ingest externally computed vectors from a text file.
    Import(ImportArgs),
    /// Apply a trained adapter to every vector of a store.
    Adapt(AdaptArgs),
}

#[derive(Args, Debug, Default)]
pub struct GenArgs {
    #[arg(long)]
    pub n_tables: Option<usize>,
    #[arg(long)]
    pub rows_min: Option<usize>,
    #[arg(long)]
    pub rows_max: Option<usize>,
    #[arg(long)]
    pub cols_min: Option<usize>,
    #[arg(long)]
    pub cols_max: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Queries per table.
    #[arg(long)]
    pub per_table: Option<usize>,
    /// Defaults to the global seed.
    #[arg(long)]
    pub query_seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct EncodeArgs {
    /// Defaults to `<run-dir>/corpus.txt`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated format ids, `all` for the 17 renderable ones.
    #[arg(long)]
    pub formats: Option<List<String>>,
    /// Store name under `stores/`.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub bucket_count: Option<usize>,
    #[arg(long)]
    pub dimension: Option<usize>,
    #[arg(long)]
    pub projection_seed: Option<u64>,
    #[arg(long)]
    pub lowercase: Option<bool>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub store: Option<String>,
    /// Must match the store when given.
    #[arg(long)]
    pub dimension: Option<usize>,
    #[arg(long)]
    pub bottleneck: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub use_bias: Option<bool>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda_inv: Option<f64>,
    #[arg(long)]
    pub lambda_var: Option<f64>,
    #[arg(long)]
    pub lambda_cov: Option<f64>,
    #[arg(long)]
    pub lambda_id: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub grad_clip_norm: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    #[arg(long)]
    pub ckpt_every: Option<usize>,
    #[arg(long)]
    pub max_views: Option<usize>,
    #[arg(long)]
    pub hidden_mult: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub store: Option<String>,
    /// Defaults to `<run-dir>/queries.txt`.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// `<query id><TAB>v1<TAB>…` lines; required unless the store came from the toy encoder.
    #[arg(long)]
    pub query_vectors: Option<PathBuf>,
    /// Defaults to every format in the store.
    #[arg(long)]
    pub formats: Option<List<String>>,
    /// Adapt the store first; the unadapted store becomes the baseline.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Store name whose report serves as the log-rank baseline.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long)]
    pub k_list: Option<List<usize>>,
    #[arg(long)]
    pub pca_tables: Option<usize>,
    /// Report directory; defaults to `<run-dir>/reports`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ShiftArgs {
    #[arg(long)]
    pub store: Option<String>,
    /// Centroid variant, `centroid_all` by default.
    #[arg(long)]
    pub reference: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub corpus_name: Option<String>,
    #[arg(long)]
    pub encoder_name: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct AdaptArgs {
    #[arg(long)]
    pub store: Option<String>,
    /// Defaults to `<run-dir>/ckpt/adapter.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output store name; defaults to `<store>-adapted`.
    #[arg(long)]
    pub out: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let ctx = commands::Context {
        seed: settings.get_or("seed", cli.seed, 0)?,
        run_dir: cli.run_dir,
        settings,
    };
    match cli.command {
        Command::Gen(a) => commands::gen(&ctx, a),
        Command::Encode(a) => commands::encode(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Shift(a) => commands::shift(&ctx, a),
        Command::Import(a) => commands::import(&ctx, a),
        Command::Adapt(a) => commands::adapt(&ctx, a),
    }
}

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
