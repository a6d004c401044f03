use std::path::PathBuf;

use chfhmm::DurationMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "chfhmm", version, about = "Early ICU mortality risk from first-day physiology")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override the config file.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub observations: Option<PathBuf>,
    #[arg(long, global = true)]
    pub outcomes: Option<PathBuf>,
    #[arg(long, global = true)]
    pub score_table: Option<PathBuf>,
    #[arg(long, global = true)]
    pub window_hours: Option<u32>,
    #[arg(long, global = true)]
    pub k_clusters: Option<usize>,
    /// Comma-separated, e.g. `2,3,4,5`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub target_days: Option<Vec<u32>>,
    #[arg(long, global = true, value_enum)]
    pub duration_mode: Option<DurationArg>,
    #[arg(long, global = true)]
    pub smoothing: Option<f64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DurationArg {
    AsPrinted,
    Remaining,
}

impl From<DurationArg> for DurationMode {
    fn from(d: DurationArg) -> Self {
        match d {
            DurationArg::AsPrinted => DurationMode::AsPrinted,
            DurationArg::Remaining => DurationMode::Remaining,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort into the output directory.
    Synth,
    /// Fit the model and write model.json.
    Train {
        /// Print silhouette widths for K = 2..=8; the configured K is starred.
        #[arg(long)]
        silhouette: bool,
        /// Also write features.csv, states.csv and fits.json.
        #[arg(long)]
        dump: bool,
    },
    /// Score patients with a trained model into predictions.csv.
    Predict {
        /// Defaults to `<out_dir>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Cross-validated comparison against the baselines.
    Evaluate,
    /// Group survival curves into curves.csv.
    Curves {
        /// Defaults to `<out_dir>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}
