use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ringkit_core::tensor::OpKind;

#[derive(Debug, Parser)]
#[command(name = "ringkit", version, about = "Hierarchical atom/ring graphs and ring-attention property models")]
pub struct Cli {
    /// Worker threads for graph building and evaluation [default: all cores]
    #[arg(long, global = true, env = "RINGKIT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a SMILES CSV into hierarchical graph JSONL
    BuildGraphs(BuildGraphsArgs),
    /// Print corpus statistics (graph count, average atoms, bonds and rings)
    Stats(StatsArgs),
    /// Train a model and write a checkpoint, metrics.jsonl and config.json
    Train(TrainArgs),
    /// Mean absolute error of a checkpoint on a dataset
    Eval(EvalArgs),
    /// Predict properties for SMILES strings, one JSON line per input
    Predict(PredictArgs),
    /// Finite-difference gradient checks at f64
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct BuildGraphsArgs {
    /// Input CSV with a header row
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    /// Column holding the SMILES strings
    #[arg(long, default_value = "smiles")]
    pub smiles_col: String,
    /// Target columns stored with each graph, comma separated
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Output JSONL file [default: stdout, with the summary on stderr]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Do not add the per-molecule virtual ring node
    #[arg(long)]
    pub no_virtual: bool,
}

/// A dataset given either as graph JSONL or as a SMILES CSV.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Graph JSONL written by build-graphs
    #[arg(long, value_name = "JSONL", required_unless_present = "csv", conflicts_with = "csv")]
    pub graphs: Option<PathBuf>,
    /// SMILES CSV with a header row
    #[arg(long, value_name = "CSV")]
    pub csv: Option<PathBuf>,
    /// SMILES column of --csv
    #[arg(long, default_value = "smiles")]
    pub smiles_col: String,
    /// Target names, comma separated; the CSV columns to read with --csv
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Build graphs from --csv without virtual ring nodes
    #[arg(long)]
    pub no_virtual: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for the checkpoint, metrics.jsonl and config.json
    #[arg(long)]
    pub out: PathBuf,
    /// JSON training config; flags override it, it overrides the profile defaults
    #[arg(long, value_name = "JSON")]
    pub config: Option<PathBuf>,
    /// Model size: desk (L=4, d=128) or paper (L=8, d=512) [default: desk]
    #[arg(long, value_parser = ["desk", "paper"])]
    pub profile: Option<String>,
    /// Seed for initialization, splitting and shuffling
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Peak learning rate of the one-cycle schedule
    #[arg(long)]
    pub max_lr: Option<f64>,
    /// Arithmetic precision [default: f32]
    #[arg(long, value_parser = ["f32", "f64"])]
    pub precision: Option<String>,
    /// Split file with train/val/test index lists instead of a random split
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    /// Attention normalization
    #[arg(long, value_parser = ["softmax", "linear"])]
    pub attn_norm: Option<String>,
    /// Train without virtual ring nodes
    #[arg(long)]
    pub no_virtual: bool,
    /// Train once per max_lr in {1e-3, 5e-4, 1e-4, 5e-5} and keep the best on validation
    #[arg(long, conflicts_with = "max_lr")]
    pub sweep: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitChoice {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory written by train
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Partition to score; anything but all re-derives the training split
    #[arg(long, value_enum, default_value_t = SplitChoice::All)]
    pub split: SplitChoice,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint directory written by train
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of molecules to predict
    #[arg(long = "in", value_name = "CSV", required_unless_present = "smiles")]
    pub input: Option<PathBuf>,
    /// SMILES column of --in
    #[arg(long, default_value = "smiles")]
    pub smiles_col: String,
    /// A SMILES string to predict; repeatable
    #[arg(long)]
    pub smiles: Vec<String>,
    /// Output JSONL file [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sabotage {
    Matmul,
    MatmulT,
    Add,
    Mul,
    Relu,
    Gather,
    SegmentSum,
    SegmentSoftmax,
}

impl Sabotage {
    pub fn op(self) -> OpKind {
        match self {
            Sabotage::Matmul => OpKind::MatMul,
            Sabotage::MatmulT => OpKind::MatMulT,
            Sabotage::Add => OpKind::Add,
            Sabotage::Mul => OpKind::Mul,
            Sabotage::Relu => OpKind::Relu,
            Sabotage::Gather => OpKind::Gather,
            Sabotage::SegmentSum => OpKind::SegmentSum,
            Sabotage::SegmentSoftmax => OpKind::SegmentSoftmax,
        }
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Also check every parameter of an L=2, d=16 model
    #[arg(long)]
    pub full: bool,
    /// Seed for the random inputs
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Flip the sign of one operation's adjoint
    #[arg(long, value_enum, hide = true)]
    pub sabotage: Option<Sabotage>,
}
