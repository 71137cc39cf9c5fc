use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Event trigger detection: synthetic data, training, prediction, scoring
/// and gradient checks.
///
/// Results are JSON on stdout; logs and the resolved configuration go to
/// stderr. Exit codes: 0 ok, 1 gradient check failed, 2 configuration,
/// 3 data, 4 divergence, 5 checkpoint, 6 alignment.
#[derive(Debug, Parser)]
#[command(name = "trigtag", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus as JSONL.
    Synth(SynthArgs),
    /// Train a (seed, lr) sweep, or both arms of the event-loss ablation.
    Train(TrainArgs),
    /// Tag a corpus with a trained checkpoint.
    Predict(PredictArgs),
    /// Score predictions against gold.
    Score(ScoreArgs),
    /// Compare two score reports over the same gold data.
    Compare(CompareArgs),
    /// Finite-difference check of every analytic gradient on a tiny model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total sentences, split 80/10/10 unless --train/--dev/--test are given.
    #[arg(long)]
    pub sentences: Option<usize>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub dev: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Fraction of sentences with at least one trigger.
    #[arg(long)]
    pub event_frac: Option<f64>,
    /// Number of built-in trigger types (1-6).
    #[arg(long)]
    pub types: Option<usize>,
    #[arg(long)]
    pub filler: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub multiword_frac: Option<f64>,
    #[arg(long)]
    pub max_triggers: Option<usize>,
    #[arg(long)]
    pub sentences_per_doc: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus JSONL with train, dev and (optionally) test sentences.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Root of the run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Runs are written under <out>/<name>/.
    #[arg(long, default_value = "run")]
    pub name: String,
    #[arg(long, value_enum, default_value_t = ProfileArg::Desk)]
    pub profile: ProfileArg,
    /// Event-presence loss on (weight 1) or off (weight 0).
    #[arg(long, value_enum)]
    pub sep: Option<Switch>,
    /// Train both arms (off, then on) with identical seeds and rates.
    #[arg(long, conflicts_with = "sep")]
    pub ablate: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Comma-separated learning rates.
    #[arg(long, value_delimiter = ',')]
    pub lrs: Option<Vec<f64>>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    /// Longest input including [CLS].
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Global gradient-norm clip.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Restrict gold to one split.
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    /// Print a tab-separated P/R/F row instead of the JSON report.
    #[arg(long)]
    pub table: bool,
    /// Row label for --table.
    #[arg(long, default_value = "system")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Report `a`; deltas are a − b.
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 16)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    pub sep: Switch,
    /// PARAM:INDEX:DELTA added to one analytic gradient entry.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}
