//! `predsens`: synthesize data, train models, audit counterfactual fairness
//! with prediction sensitivity, and monitor deployed predictions.
//!
//! Exit status is 0 on success, 1 on any error and 2 when `monitor` raised at
//! least one alarm.

mod commands;
mod input;
mod record;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "predsens", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with the command's parameters; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output file (or directory for `experiment`).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Suppress the summary normally printed on stdout or stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the two-feature causal model (fair, or biased with --biased).
    Synth(SynthArgs),
    /// Append a copy of every row with the protected value swapped.
    Augment(AugmentArgs),
    /// Train a classifier or protected-status model on a CSV.
    Train(TrainArgs),
    /// Audit a classifier against a fair reference on test data.
    Audit(AuditArgs),
    /// Record the mean and spread of prediction sensitivity on reference data.
    Baseline(BaselineArgs),
    /// Score a stream of rows and flag unusually sensitive predictions.
    Monitor(MonitorArgs),
    /// Run a multi-trial experiment recipe.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// Draw the protected attribute conditionally on the label
    /// (0.25/0.75 unless the config says otherwise).
    #[arg(long)]
    pub biased: bool,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON; defaults to the data path with `.schema.json`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub input: DataArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum TargetArg {
    Label,
    Protected,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: DataArgs,
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fraction of rows held out for test accuracy; 0 trains on every row.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Reuse the encoder frozen in this model file instead of fitting one.
    #[arg(long, value_name = "MODEL")]
    pub encoder_from: Option<PathBuf>,
    /// Write the raw train/test rows and schema into this directory.
    #[arg(long, value_name = "DIR")]
    pub split_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// The audited classifier F.
    #[arg(long)]
    pub classifier: PathBuf,
    /// The protected-status model A.
    #[arg(long)]
    pub protected_model: PathBuf,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// The counterfactually fair reference classifier.
    #[arg(long)]
    pub reference: PathBuf,
    /// Labelled test CSV in the models' raw schema.
    #[arg(long)]
    pub data: PathBuf,
    /// Counterfactually augment the test rows before auditing.
    #[arg(long)]
    pub augment_test: bool,
    #[arg(long)]
    pub include_rows: bool,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Evaluate all models with the protected slot imputed.
    #[arg(long)]
    pub exclude_protected: bool,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    /// Reference CSV in the models' raw schema.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum InputFormat {
    Ndjson,
    Csv,
}

#[derive(Args, Debug)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long)]
    pub baseline: PathBuf,
    /// Row stream; `-` reads stdin.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// Defaults to csv for `.csv` files and ndjson otherwise.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    #[arg(long)]
    pub k_sigma: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Override the recipe's trial count.
    #[arg(long)]
    pub trials: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let g = &cli.global;
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(g, a),
        Command::Augment(a) => commands::augment(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Audit(a) => commands::audit(g, a),
        Command::Baseline(a) => commands::baseline(g, a),
        Command::Monitor(a) => commands::monitor(g, a),
        Command::Experiment(a) => commands::experiment(g, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
