//! Model lifecycle subcommands: joint training, head fine-tuning, and
//! checkpoint inspection.

use std::path::PathBuf;

use clap::Args;
use shortlex_core::nmt::{
    finetune, inspect_checkpoint, save_checkpoint, train, FinetuneConfig, ModelConfig, ModelParams,
    PosWeightMode, TrainConfig, UpdateScope,
};
use shortlex_core::{Error, Result};

use crate::config::{FileConfig, Resolved};
use crate::io;

// ── shared flag parsing ─────────────────────────────────────────────────

/// Accepts `auto`, `auto:X`, `fixed:W`, or a bare number (fixed weight).
fn parse_pos_weight(raw: &str) -> Result<PosWeightMode> {
    let bad = || Error::InvalidInput(format!("bad pos-weight {raw:?} (auto[:X] or fixed:W)"));
    if raw == "auto" {
        return Ok(PosWeightMode::Auto { strength: 1.0 });
    }
    if let Some(x) = raw.strip_prefix("auto:") {
        return Ok(PosWeightMode::Auto {
            strength: x.parse().map_err(|_| bad())?,
        });
    }
    if let Some(w) = raw.strip_prefix("fixed:") {
        return Ok(PosWeightMode::Fixed(w.parse().map_err(|_| bad())?));
    }
    raw.parse().map(PosWeightMode::Fixed).map_err(|_| bad())
}

fn format_pos_weight(mode: PosWeightMode) -> String {
    match mode {
        PosWeightMode::Auto { strength } => format!("auto:{strength}"),
        PosWeightMode::Fixed(w) => format!("fixed:{w}"),
    }
}

fn parse_scope(raw: &str) -> Result<UpdateScope> {
    match raw {
        "nvs-head" => Ok(UpdateScope::NvsHeadOnly),
        "all" => Ok(UpdateScope::All),
        other => Err(Error::InvalidInput(format!(
            "unknown scope {other:?} (nvs-head or all)"
        ))),
    }
}

// ── train ───────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Segmented source corpus
    #[arg(long)]
    src: PathBuf,
    /// Segmented target corpus, line-aligned with --src
    #[arg(long)]
    tgt: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file
    #[arg(long)]
    tgt_vocab: PathBuf,
    /// Optimizer steps (flag or config file)
    #[arg(long)]
    steps: Option<usize>,
    /// Sentences per batch [default: 16]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Peak learning rate [default: 3e-4]
    #[arg(long)]
    lr: Option<f64>,
    /// Linear warm-up steps [default: 400]
    #[arg(long)]
    warmup: Option<usize>,
    /// Random seed [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden size [default: 64]
    #[arg(long)]
    d_model: Option<usize>,
    /// Attention heads [default: 4]
    #[arg(long)]
    heads: Option<usize>,
    /// Feed-forward size [default: 256]
    #[arg(long)]
    ffn: Option<usize>,
    /// Encoder layers [default: 4]
    #[arg(long)]
    enc_layers: Option<usize>,
    /// Decoder layers [default: 2]
    #[arg(long)]
    dec_layers: Option<usize>,
    /// Dropout rate [default: 0.1]
    #[arg(long)]
    dropout: Option<f64>,
    /// Label smoothing [default: 0.1]
    #[arg(long)]
    label_smoothing: Option<f64>,
    /// Positive-class weight of the vocabulary-prediction loss:
    /// auto[:X] or fixed:W [default: auto:0.55]
    #[arg(long, value_parser = |s: &str| parse_pos_weight(s).map_err(|e| e.to_string()))]
    pos_weight: Option<PosWeightMode>,
    /// Record a loss point every this many steps [default: 50]
    #[arg(long)]
    log_every: Option<usize>,
    /// Where to write the checkpoint
    #[arg(long)]
    out: PathBuf,
}

pub fn train_cmd(args: &TrainArgs, cfg: &FileConfig) -> Result<()> {
    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let tgt_vocab = io::load_vocab(&args.tgt_vocab)?;

    let mut model_cfg = ModelConfig::small(src_vocab.len(), tgt_vocab.len());
    model_cfg.d_model = cfg.resolve(args.d_model, "d-model", model_cfg.d_model)?;
    model_cfg.n_heads = cfg.resolve(args.heads, "heads", model_cfg.n_heads)?;
    model_cfg.d_ffn = cfg.resolve(args.ffn, "ffn", model_cfg.d_ffn)?;
    model_cfg.enc_layers = cfg.resolve(args.enc_layers, "enc-layers", model_cfg.enc_layers)?;
    model_cfg.dec_layers = cfg.resolve(args.dec_layers, "dec-layers", model_cfg.dec_layers)?;
    model_cfg.dropout = cfg.resolve(args.dropout, "dropout", model_cfg.dropout)?;
    model_cfg.label_smoothing = cfg.resolve(
        args.label_smoothing,
        "label-smoothing",
        model_cfg.label_smoothing,
    )?;
    if let Some(mode) = args.pos_weight {
        model_cfg.pos_weight = mode;
    } else if let Some(raw) = cfg.get::<String>("pos-weight")? {
        model_cfg.pos_weight = parse_pos_weight(&raw)?;
    }

    let seed = cfg.resolve(args.seed, "seed", 1)?;
    let steps = cfg.require(args.steps, "steps")?;
    let mut train_cfg =
        TrainConfig::new(steps, cfg.resolve(args.batch_size, "batch-size", 16)?, seed);
    train_cfg.lr = cfg.resolve(args.lr, "lr", train_cfg.lr)?;
    train_cfg.warmup_steps = cfg.resolve(args.warmup, "warmup", train_cfg.warmup_steps)?;
    train_cfg.log_every = cfg.resolve(args.log_every, "log-every", train_cfg.log_every)?;

    Resolved::default()
        .put("steps", train_cfg.steps)
        .put("batch-size", train_cfg.batch_size)
        .put("lr", train_cfg.lr)
        .put("warmup", train_cfg.warmup_steps)
        .put("seed", seed)
        .put("d-model", model_cfg.d_model)
        .put("heads", model_cfg.n_heads)
        .put("ffn", model_cfg.d_ffn)
        .put("enc-layers", model_cfg.enc_layers)
        .put("dec-layers", model_cfg.dec_layers)
        .put("dropout", model_cfg.dropout)
        .put("label-smoothing", model_cfg.label_smoothing)
        .put("pos-weight", format_pos_weight(model_cfg.pos_weight))
        .put("out", args.out.display())
        .log("train");

    let pairs = io::read_pairs(&args.src, &args.tgt, &src_vocab, &tgt_vocab)?;
    let mut params = ModelParams::init(model_cfg, seed)?;
    let stats = train(&mut params, &pairs, &train_cfg)?;
    for point in &stats.history {
        log::info!(
            "step {}: translation loss {:.4}, selection loss {:.5}",
            point.step,
            point.mt,
            point.nvs
        );
    }
    log::info!(
        "finished {} steps: translation loss {:.4}, selection loss {:.5}",
        stats.steps_run,
        stats.final_mt,
        stats.final_nvs
    );
    save_checkpoint(&params, io::create(&args.out)?)
}

// ── finetune ────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    /// Checkpoint to start from
    #[arg(long)]
    model: PathBuf,
    /// Segmented adaptation source corpus
    #[arg(long)]
    src: PathBuf,
    /// Segmented adaptation target corpus
    #[arg(long)]
    tgt: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file
    #[arg(long)]
    tgt_vocab: PathBuf,
    /// Passes over the adaptation corpus [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate [default: 1e-4]
    #[arg(long)]
    lr: Option<f64>,
    /// Batch boundary: summed target lengths stay at or under this [default: 2048]
    #[arg(long)]
    max_batch_tokens: Option<usize>,
    /// Random seed [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Parameters to update: nvs-head or all [default: nvs-head]
    #[arg(long, value_parser = |s: &str| parse_scope(s).map_err(|e| e.to_string()))]
    scope: Option<UpdateScope>,
    /// Where to write the fine-tuned checkpoint
    #[arg(long)]
    out: PathBuf,
}

pub fn finetune_cmd(args: &FinetuneArgs, cfg: &FileConfig) -> Result<()> {
    let seed = cfg.resolve(args.seed, "seed", 1)?;
    let mut fc = FinetuneConfig::new(seed);
    fc.epochs = cfg.resolve(args.epochs, "epochs", fc.epochs)?;
    fc.lr = cfg.resolve(args.lr, "lr", fc.lr)?;
    fc.max_batch_tokens = cfg.resolve(
        args.max_batch_tokens,
        "max-batch-tokens",
        fc.max_batch_tokens,
    )?;
    if let Some(scope) = args.scope {
        fc.scope = scope;
    } else if let Some(raw) = cfg.get::<String>("scope")? {
        fc.scope = parse_scope(&raw)?;
    }

    Resolved::default()
        .put("model", args.model.display())
        .put("epochs", fc.epochs)
        .put("lr", fc.lr)
        .put("max-batch-tokens", fc.max_batch_tokens)
        .put("seed", seed)
        .put(
            "scope",
            match fc.scope {
                UpdateScope::NvsHeadOnly => "nvs-head",
                UpdateScope::All => "all",
            },
        )
        .put("out", args.out.display())
        .log("finetune");

    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let tgt_vocab = io::load_vocab(&args.tgt_vocab)?;
    let pairs = io::read_pairs(&args.src, &args.tgt, &src_vocab, &tgt_vocab)?;
    let mut params: ModelParams<f64> = io::load_model(&args.model)?.cast();
    let stats = finetune(&mut params, &pairs, &fc)?;
    log::info!(
        "fine-tuned for {} updates: selection loss {:.5}",
        stats.steps_run,
        stats.final_nvs
    );
    save_checkpoint(&params, io::create(&args.out)?)
}

// ── inspect checkpoint ──────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct InspectCheckpointArgs {
    /// Checkpoint to describe
    #[arg(long)]
    model: PathBuf,
}

pub fn inspect_cmd(args: &InspectCheckpointArgs) -> Result<()> {
    let path = &args.model;
    let summary = inspect_checkpoint(
        std::fs::File::open(path)
            .map(std::io::BufReader::new)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?,
    )?;
    let cfg = &summary.cfg;
    println!(
        "v_src={} v_tgt={} d_model={} heads={} ffn={} enc_layers={} dec_layers={}",
        cfg.v_src, cfg.v_tgt, cfg.d_model, cfg.n_heads, cfg.d_ffn, cfg.enc_layers, cfg.dec_layers
    );
    println!("arrays={}", summary.arrays.len());
    println!("total_floats={}", summary.total_floats());
    println!("nvs_floats={}", summary.nvs_floats());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pos_weight_accepts_all_spellings() {
        assert_eq!(
            parse_pos_weight("auto").unwrap(),
            PosWeightMode::Auto { strength: 1.0 }
        );
        assert_eq!(
            parse_pos_weight("auto:2.5").unwrap(),
            PosWeightMode::Auto { strength: 2.5 }
        );
        assert_eq!(
            parse_pos_weight("fixed:1000").unwrap(),
            PosWeightMode::Fixed(1000.0)
        );
        assert_eq!(parse_pos_weight("7").unwrap(), PosWeightMode::Fixed(7.0));
        assert!(parse_pos_weight("auto:abc").is_err());
    }

    #[test]
    fn scope_names_parse() {
        assert_eq!(parse_scope("nvs-head").unwrap(), UpdateScope::NvsHeadOnly);
        assert_eq!(parse_scope("all").unwrap(), UpdateScope::All);
        assert!(parse_scope("half").is_err());
    }
}
