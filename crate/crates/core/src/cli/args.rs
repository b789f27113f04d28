use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::solvers::SolverKind;

#[derive(Debug, Parser)]
#[command(
    name = "hotet",
    version,
    about = "Optimal transport maps from distribution embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Mmb,
    Mmv2,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Mmb => SolverKind::Mmb,
            SolverArg::Mmv2 => SolverKind::Mmv2,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated dimensions.
    #[arg(long, global = true, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long, global = true, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long, global = true)]
    pub ablate_embedding: bool,
    /// Warm-up steps from an existing checkpoint.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "50")]
    pub finetune: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pair-mode HOTET and raw MM-B on generated pairs across dimensions.
    Benchmark,
    /// One-to-one training, on files or on a generated pair.
    TrainPair(PairInputs),
    /// Multiple-to-one training, on files or on generated mixtures.
    TrainMulti(MultiInputs),
    /// Zero-shot maps from a multi-trained checkpoint.
    Predict(SourceInput),
    /// Warm-up steps on a new pair from a checkpoint.
    Finetune(PairInputs),
    /// Color transfer between PNG images.
    ColorTransfer(ColorInputs),
    /// Context vector of a distribution file.
    Embed(SourceInput),
    /// Metrics of a checkpoint on its generated problem.
    Eval,
}

#[derive(Debug, Clone, Args)]
pub struct PairInputs {
    /// Source distribution file.
    #[arg(long, requires = "target")]
    pub source: Option<PathBuf>,
    /// Target distribution file.
    #[arg(long, requires = "source")]
    pub target: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MultiInputs {
    /// Source distribution files.
    #[arg(long, num_args = 1.., requires = "target")]
    pub source: Vec<PathBuf>,
    /// Reference distribution file.
    #[arg(long)]
    pub target: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SourceInput {
    #[arg(long)]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ColorInputs {
    /// Source images.
    #[arg(long, num_args = 1.., required = true)]
    pub source: Vec<PathBuf>,
    /// Target image.
    #[arg(long)]
    pub target: PathBuf,
}
