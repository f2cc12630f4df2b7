//! `cascade-ner` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::UsageError;

#[derive(Parser, Debug)]
#[command(name = "cascade-ner", version, about = "Coarse-to-fine cascaded named-entity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the boundary + coarse-type tagger.
    TrainCoarse(TrainTaggerArgs),
    /// Train the single-stage tagger over the fine inventory.
    TrainBaseline(TrainTaggerArgs),
    /// Train the per-mention fine classifier.
    TrainFine(TrainFineArgs),
    /// Tag a column corpus and write the prediction TSV.
    Predict(PredictArgs),
    /// Score a prediction TSV against a gold column corpus.
    Evaluate(EvaluateArgs),
    /// Merge silver mentions of allowed types into a gold corpus.
    Augment(AugmentArgs),
    /// Run a (representation × filter × seed) grid from a manifest.
    Experiment(ExperimentArgs),
    /// Write a synthetic cue corpus with its taxonomy and a manifest.
    Synth(SynthArgs),
}

/// Optimizer overrides shared by the training commands.
#[derive(Args, Debug, Clone)]
struct TrainOverrides {
    /// TOML file with a full or partial training config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Learning rate [default: from config, else built-in].
    #[arg(long)]
    lr: Option<f64>,
    /// Batch size [default: from config, else built-in].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Number of epochs [default: from config, else built-in].
    #[arg(long)]
    epochs: Option<usize>,
    /// Random seed [default: from config, else 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainTaggerArgs {
    /// Training column corpus.
    #[arg(long)]
    train: PathBuf,
    /// Development column corpus, used for checkpoint selection.
    #[arg(long)]
    dev: PathBuf,
    /// Label inventory, one label per line.
    #[arg(long)]
    taxonomy: PathBuf,
    /// Checkpoint path [default: $CASCADE_NER_OUTPUT_ROOT/<command>/model.ckpt].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train this many runs with consecutive seeds and summarize them.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(Args, Debug)]
struct TrainFineArgs {
    /// Fully annotated training column corpus.
    #[arg(long, conflicts_with_all = ["text", "standoff"])]
    train: Option<PathBuf>,
    /// Token text for standoff training data (tags ignored).
    #[arg(long, requires = "standoff")]
    text: Option<PathBuf>,
    /// Standoff mentions over `--text`; partial annotation is fine.
    #[arg(long, requires = "text")]
    standoff: Option<PathBuf>,
    /// Development column corpus.
    #[arg(long)]
    dev: PathBuf,
    /// Label inventory, one label per line.
    #[arg(long)]
    taxonomy: PathBuf,
    /// Mention representation [default: from config, else masked].
    #[arg(long, value_enum)]
    repr: Option<ReprArg>,
    /// Checkpoint path [default: $CASCADE_NER_OUTPUT_ROOT/train-fine/model.ckpt].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the rendered training examples to this file.
    #[arg(long)]
    dump_examples: Option<PathBuf>,
    /// Start from this tagger checkpoint's tokenizer and encoder.
    #[arg(long, value_name = "TAGGER_CKPT")]
    init_from: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ReprArg {
    Masked,
    EntityMasked,
    EntityBounded,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum FilterArg {
    Pass,
    Coarse,
    Threshold,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Column corpus to tag; any tags in it are ignored unless `--gold-spans`.
    #[arg(long)]
    input: PathBuf,
    /// Coarse tagger checkpoint (cascade stage one).
    #[arg(long, conflicts_with = "baseline")]
    tagger: Option<PathBuf>,
    /// Fine classifier checkpoint (cascade stage two).
    #[arg(long, conflicts_with = "baseline")]
    classifier: Option<PathBuf>,
    /// Single-stage baseline checkpoint.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Decode-time label filter.
    #[arg(long, value_enum, default_value_t = FilterArg::Pass)]
    filter: FilterArg,
    /// Threshold for `--filter threshold`.
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
    /// Classify the input's gold spans with their gold coarse types.
    #[arg(long, requires = "classifier", conflicts_with = "tagger")]
    gold_spans: bool,
    /// Prediction TSV path [default: $CASCADE_NER_OUTPUT_ROOT/predict/predictions.tsv].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum GranularityArg {
    All,
    Full,
    Type,
    Boundary,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Gold column corpus.
    #[arg(long)]
    gold: PathBuf,
    /// Prediction TSV.
    #[arg(long)]
    pred: PathBuf,
    /// Which mention-level scores to print.
    #[arg(long, value_enum, default_value_t = GranularityArg::All)]
    granularity: GranularityArg,
    /// Hierarchical accuracy on gold spans instead of mention F1.
    #[arg(long, alias = "gold-spans")]
    hier: bool,
    /// Also write structured records (JSON lines) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    /// Gold column corpus.
    #[arg(long)]
    gold: PathBuf,
    /// Silver standoff mentions over the same documents.
    #[arg(long)]
    silver: PathBuf,
    /// Coarse types to take from the silver data, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    allow: Vec<String>,
    /// Merged column corpus [default: $CASCADE_NER_OUTPUT_ROOT/augment/merged.conll].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// TOML manifest; relative paths resolve against its directory.
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory [default: $CASCADE_NER_OUTPUT_ROOT/synth].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Coarse-labeled training sentences.
    #[arg(long, default_value_t = 5000)]
    coarse: usize,
    /// Fine-labeled training sentences.
    #[arg(long, default_value_t = 500)]
    fine: usize,
    /// Development sentences per label view.
    #[arg(long, default_value_t = 200)]
    dev: usize,
    /// Fine-labeled test sentences.
    #[arg(long, default_value_t = 1000)]
    test: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainCoarse(a) => commands::train_tagger_cmd(a, false),
        Command::TrainBaseline(a) => commands::train_tagger_cmd(a, true),
        Command::TrainFine(a) => commands::train_fine(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Augment(a) => commands::augment(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
