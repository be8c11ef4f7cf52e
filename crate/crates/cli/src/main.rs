mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qbe_core::dtw::DtwFeatures;
use qbe_core::eval::Backend;

#[derive(Debug, Parser)]
#[command(name = "qbe", version, about = "Query-by-example search with acoustic span embeddings")]
pub struct Cli {
    /// Overrides the `seed` configuration key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory receiving every output of the command.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// `section.key=value` configuration override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SearchFlags {
    /// Lower query-length ratio of the candidate band (`a/b` or decimal).
    #[arg(long)]
    pub min_ratio: Option<String>,
    /// Upper query-length ratio of the candidate band.
    #[arg(long)]
    pub max_ratio: Option<String>,
}

#[derive(Debug, Args)]
pub struct LatticeFlags {
    /// Window shift in frames.
    #[arg(long)]
    pub shift: Option<usize>,
    /// Comma-separated window sizes in frames.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct DtwFlags {
    #[arg(long)]
    pub dtw_window: Option<usize>,
    #[arg(long)]
    pub dtw_shift: Option<usize>,
    /// raw | hidden
    #[arg(long)]
    pub dtw_features: Option<DtwFeatures>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check features and alignments of every split in a corpus.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train the word-level acoustic and written encoders.
    TrainAwe {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train span-level encoders on top of a word-level checkpoint.
    TrainAse {
        #[arg(long)]
        corpus: PathBuf,
        /// Word-level checkpoint.
        #[arg(long)]
        init: PathBuf,
    },
    /// Embed every window of a search collection.
    Index {
        #[arg(long)]
        model: PathBuf,
        /// Split directory holding `feats/`.
        #[arg(long)]
        collection: PathBuf,
        #[command(flatten)]
        lattice: LatticeFlags,
    },
    /// Score queries against an index.
    Search {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// Query directory holding `feats/` and `queries.txt`.
        #[arg(long)]
        queries: PathBuf,
        #[command(flatten)]
        band: SearchFlags,
    },
    /// Score queries against a collection by sliding-window DTW.
    DtwSearch {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        collection: PathBuf,
        /// Needed for hidden-state features.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        dtw: DtwFlags,
    },
    /// Sum score tables with identical keys.
    Fuse {
        #[arg(required = true, num_args = 1..)]
        tables: Vec<PathBuf>,
    },
    /// Compute min Cnxe and max TWV of a score table.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Same/different word discrimination AP on a split.
    Discriminate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "dev")]
        split: String,
        /// embedding | dtw-raw | dtw-hidden
        #[arg(long, default_value = "embedding")]
        scoring: Backend,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Cap on word tokens (0 = all).
        #[arg(long)]
        tokens: Option<usize>,
    },
    /// Single-threaded per-query search timing.
    Bench {
        #[arg(long)]
        queries: PathBuf,
        /// embedding | dtw-raw | dtw-hidden
        #[arg(long)]
        backend: Backend,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Prebuilt index (embedding backend).
        #[arg(long)]
        index: Option<PathBuf>,
        /// Collection split directory (DTW backends).
        #[arg(long)]
        collection: Option<PathBuf>,
        #[command(flatten)]
        band: SearchFlags,
        #[command(flatten)]
        dtw: DtwFlags,
    },
    /// Generate a synthetic corpus.
    Synth,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
