//! `shortlex`: every pipeline stage behind one binary. Exit codes: 0 on
//! success, 1 on input errors (bad flags, missing or malformed files),
//! 2 on internal errors. Diagnostics go to stderr; data goes to the
//! output stream or the requested files.

mod cmd;
mod config;
mod io;

use clap::{Parser, Subcommand};
use shortlex_core::Error;
use std::path::PathBuf;

use config::FileConfig;

#[derive(Parser, Debug)]
#[command(
    name = "shortlex",
    version,
    about = "Vocabulary-selection toolkit for translation decoding"
)]
struct Cli {
    /// key=value defaults applied where flags are not given
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Learn or apply subword segmentation
    #[command(subcommand)]
    Bpe(BpeCmd),
    /// Build vocabularies from segmented text
    #[command(subcommand)]
    Vocab(VocabCmd),
    /// Filter a parallel corpus by length, ratio, and overlap
    Clean(cmd::corpus::CleanArgs),
    /// Train word-alignment models
    #[command(subcommand)]
    Align(AlignCmd),
    /// Extract translation lexicons from alignment models
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Train the translation model with its selection head
    Train(cmd::model::TrainArgs),
    /// Fine-tune a trained model on an adaptation corpus
    Finetune(cmd::model::FinetuneArgs),
    /// Translate with optional vocabulary selection
    Translate(cmd::translate::TranslateArgs),
    /// Dump the selected vocabulary per sentence
    Bow(cmd::translate::BowArgs),
    /// Measure recall, sweep curves, latency, or context effects
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Score translations
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Describe stored artifacts
    #[command(subcommand)]
    Inspect(InspectCmd),
}

#[derive(Subcommand, Debug)]
enum BpeCmd {
    /// Learn merge operations from raw text
    Learn(cmd::corpus::BpeLearnArgs),
    /// Segment raw text with a learned merges file
    Apply(cmd::corpus::BpeApplyArgs),
}

#[derive(Subcommand, Debug)]
enum VocabCmd {
    /// Count tokens and write a vocabulary file
    Build(cmd::corpus::VocabBuildArgs),
}

#[derive(Subcommand, Debug)]
enum AlignCmd {
    /// Run EM over a parallel corpus
    Train(cmd::align::AlignTrainArgs),
}

#[derive(Subcommand, Debug)]
enum LexiconCmd {
    /// Write the top-k translation lexicon as TSV
    Extract(cmd::align::LexiconExtractArgs),
}

#[derive(Subcommand, Debug)]
enum BenchCmd {
    /// Reference-token recall of a selector on an evaluation set
    Recall(cmd::bench::RecallArgs),
    /// Vocabulary-size vs recall curve over a parameter grid
    Sweep(cmd::bench::SweepArgs),
    /// Per-stage decoding latency under the batch-1 protocol
    Latency(cmd::bench::LatencyArgs),
    /// Contextual vs per-word selection on annotated spans
    Context(cmd::bench::ContextArgs),
}

#[derive(Subcommand, Debug)]
enum EvalCmd {
    /// Corpus BLEU of a hypothesis file against a reference file
    Bleu(cmd::bench::BleuArgs),
}

#[derive(Subcommand, Debug)]
enum InspectCmd {
    /// Shapes and parameter counts of a checkpoint
    Checkpoint(cmd::model::InspectCheckpointArgs),
}

fn dispatch(cli: &Cli) -> shortlex_core::Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match &cli.cmd {
        Cmd::Bpe(BpeCmd::Learn(args)) => cmd::corpus::bpe_learn(args, &cfg),
        Cmd::Bpe(BpeCmd::Apply(args)) => cmd::corpus::bpe_apply(args),
        Cmd::Vocab(VocabCmd::Build(args)) => cmd::corpus::vocab_build(args, &cfg),
        Cmd::Clean(args) => cmd::corpus::clean(args, &cfg),
        Cmd::Align(AlignCmd::Train(args)) => cmd::align::train(args, &cfg),
        Cmd::Lexicon(LexiconCmd::Extract(args)) => cmd::align::extract(args, &cfg),
        Cmd::Train(args) => cmd::model::train_cmd(args, &cfg),
        Cmd::Finetune(args) => cmd::model::finetune_cmd(args, &cfg),
        Cmd::Translate(args) => cmd::translate::translate(args, &cfg),
        Cmd::Bow(args) => cmd::translate::bow(args, &cfg),
        Cmd::Bench(BenchCmd::Recall(args)) => cmd::bench::recall(args, &cfg),
        Cmd::Bench(BenchCmd::Sweep(args)) => cmd::bench::sweep(args, &cfg),
        Cmd::Bench(BenchCmd::Latency(args)) => cmd::bench::latency(args, &cfg),
        Cmd::Bench(BenchCmd::Context(args)) => cmd::bench::context(args, &cfg),
        Cmd::Eval(EvalCmd::Bleu(args)) => cmd::bench::bleu(args),
        Cmd::Inspect(InspectCmd::Checkpoint(args)) => cmd::model::inspect_cmd(args),
    }
}

/// Input problems exit 1; anything that indicates a bug or numeric
/// breakdown exits 2.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidInput(_) | Error::Format(_) | Error::Io(_) => 1,
        Error::Shape(_) | Error::Numeric(_) | Error::Diverged { .. } => 2,
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = dispatch(&cli) {
        log::error!("{e}");
        std::process::exit(exit_code(&e));
    }
}
