//! Measurement subcommands: recall, sweep curves, decode latency, the
//! context comparison, and corpus BLEU.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use shortlex_core::bench::{
    avg_vocab_size, context_compare, corpus_bleu, corpus_recall, k_grid, lambda_grid,
    read_eval_tsv, sweep_align, sweep_nvs, time_decode, write_context_tsv, write_sweep_csv,
    Averaging, EvalItem, RecallScope, StageStats,
};
use shortlex_core::nmt::{encode, nvs_scores, ModelParams};
use shortlex_core::selection::{select_align, select_nvs, BagOfWords};
use shortlex_core::{Error, Result};

use crate::cmd::translate::SelectorSetup;
use crate::cmd::{parse_list, SelectorKind};
use crate::config::{FileConfig, Resolved};
use crate::io;

// ── shared io ───────────────────────────────────────────────────────────

fn read_eval(
    path: &PathBuf,
    src_vocab: &shortlex_core::corpus::Vocabulary,
    tgt_vocab: &shortlex_core::corpus::Vocabulary,
) -> Result<Vec<EvalItem>> {
    let file = std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    read_eval_tsv(file, src_vocab, tgt_vocab)
}

/// Writes to the path when given, otherwise to stdout.
fn emit(out: Option<&PathBuf>, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = io::create(path)?;
            body(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            body(&mut w)
        }
    }
}

fn selector_bows(
    selector: &SelectorSetup,
    params: Option<&ModelParams<f32>>,
    items: &[EvalItem],
    v_tgt: usize,
) -> Result<Vec<BagOfWords>> {
    items
        .iter()
        .map(|item| match selector.kind {
            SelectorKind::Align => {
                let lexicon = selector
                    .lexicon
                    .as_ref()
                    .expect("align selector loads a lexicon");
                select_align(lexicon, &item.source, selector.k, v_tgt)
            }
            kind => {
                let params = params
                    .ok_or_else(|| Error::InvalidInput("the nvs selector needs --model".into()))?;
                let enc = encode(params, &item.source)?;
                let z = nvs_scores(params, &enc)?;
                let lambda = if kind == SelectorKind::NoSelection {
                    0.0
                } else {
                    selector.lambda
                };
                select_nvs(&z, lambda)
            }
        })
        .collect()
}

// ── bench recall ────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct RecallArgs {
    /// Evaluation TSV: source, reference, optional span annotation
    #[arg(long)]
    eval: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file
    #[arg(long)]
    tgt_vocab: PathBuf,
    /// Vocabulary selector: none, nvs, or align [default: nvs]
    #[arg(long, value_parser = SelectorKind::from_str_arg)]
    selector: Option<SelectorKind>,
    /// Checkpoint for the nvs selector
    #[arg(long)]
    model: Option<PathBuf>,
    /// Selection threshold for the nvs selector [default: 0.9]
    #[arg(long)]
    lambda: Option<f64>,
    /// Lexicon TSV for the align selector
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Translations kept per source token for the align selector [default: 100]
    #[arg(long)]
    k: Option<usize>,
    /// Reference tokens counted: sentence or span [default: sentence]
    #[arg(long)]
    scope: Option<String>,
    /// Corpus aggregation: macro or micro [default: macro]
    #[arg(long)]
    averaging: Option<String>,
}

pub fn recall(args: &RecallArgs, cfg: &FileConfig) -> Result<()> {
    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let tgt_vocab = io::load_vocab(&args.tgt_vocab)?;
    let selector = SelectorSetup::resolve(
        args.selector,
        args.lambda,
        args.k,
        args.lexicon.as_deref(),
        SelectorKind::Nvs,
        cfg,
        &src_vocab,
        &tgt_vocab,
    )?;
    let scope = match cfg
        .resolve(args.scope.clone(), "scope", "sentence".into())?
        .as_str()
    {
        "sentence" => RecallScope::Sentence,
        "span" => RecallScope::Span,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown scope {other:?} (sentence or span)"
            )))
        }
    };
    let averaging = match cfg
        .resolve(args.averaging.clone(), "averaging", "macro".into())?
        .as_str()
    {
        "macro" => Averaging::Macro,
        "micro" => Averaging::Micro,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown averaging {other:?} (macro or micro)"
            )))
        }
    };
    Resolved::default()
        .put("eval", args.eval.display())
        .put("selector", selector.kind)
        .put("param", selector.param())
        .put(
            "scope",
            if scope == RecallScope::Span {
                "span"
            } else {
                "sentence"
            },
        )
        .put(
            "averaging",
            if averaging == Averaging::Micro {
                "micro"
            } else {
                "macro"
            },
        )
        .log("bench recall");

    let items = read_eval(&args.eval, &src_vocab, &tgt_vocab)?;
    let params: Option<ModelParams<f32>> = match selector.kind {
        SelectorKind::Align => None,
        _ => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("the nvs selector needs --model".into()))?;
            Some(io::load_model(path)?)
        }
    };
    let bows = selector_bows(&selector, params.as_ref(), &items, tgt_vocab.len())?;
    let recall = corpus_recall(&bows, &items, scope, averaging)?;
    let avg = avg_vocab_size(&bows)?;
    println!("sentences\trecall\tavg_vocab_size");
    println!("{}\t{recall:.4}\t{avg:.4}", items.len());
    Ok(())
}

// ── bench sweep ─────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Evaluation TSV: source, reference, optional span annotation
    #[arg(long)]
    eval: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file
    #[arg(long)]
    tgt_vocab: PathBuf,
    /// Vocabulary selector to sweep: nvs or align [default: nvs]
    #[arg(long, value_parser = SelectorKind::from_str_arg)]
    selector: Option<SelectorKind>,
    /// Checkpoint for the nvs selector
    #[arg(long)]
    model: Option<PathBuf>,
    /// Lexicon TSV for the align selector
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Grid: "paper" or a comma-separated list of thresholds/depths [default: paper]
    #[arg(long)]
    grid: Option<String>,
    /// CSV destination [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn sweep(args: &SweepArgs, cfg: &FileConfig) -> Result<()> {
    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let tgt_vocab = io::load_vocab(&args.tgt_vocab)?;
    let selector = SelectorSetup::resolve(
        args.selector,
        None,
        None,
        args.lexicon.as_deref(),
        SelectorKind::Nvs,
        cfg,
        &src_vocab,
        &tgt_vocab,
    )?;
    let grid = cfg.resolve(args.grid.clone(), "grid", "paper".into())?;
    Resolved::default()
        .put("eval", args.eval.display())
        .put("selector", selector.kind)
        .put("grid", &grid)
        .log("bench sweep");

    let items = read_eval(&args.eval, &src_vocab, &tgt_vocab)?;
    let records = match selector.kind {
        SelectorKind::Nvs => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("the nvs selector needs --model".into()))?;
            let params: ModelParams<f32> = io::load_model(path)?;
            let lambdas = match grid.as_str() {
                "paper" => lambda_grid(),
                raw => parse_list(raw, "threshold")?,
            };
            sweep_nvs(&params, &items, &lambdas)?
        }
        SelectorKind::Align => {
            let lexicon = selector
                .lexicon
                .as_ref()
                .expect("align selector loads a lexicon");
            let ks = match grid.as_str() {
                "paper" => k_grid(lexicon.k_max(), tgt_vocab.len()),
                raw => parse_list(raw, "depth")?,
            };
            sweep_align(lexicon, &items, &ks, tgt_vocab.len())?
        }
        SelectorKind::NoSelection => {
            return Err(Error::InvalidInput(
                "sweep needs the nvs or align selector".into(),
            ))
        }
    };
    emit(args.out.as_ref(), |w| write_sweep_csv(&records, w))
}

// ── bench latency ───────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct LatencyArgs {
    /// Checkpoint to decode with
    #[arg(long)]
    model: PathBuf,
    /// Segmented source input, one sentence per line
    #[arg(long)]
    input: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file (align selector only)
    #[arg(long)]
    tgt_vocab: Option<PathBuf>,
    /// Vocabulary selector: none, nvs, or align [default: none]
    #[arg(long, value_parser = SelectorKind::from_str_arg)]
    selector: Option<SelectorKind>,
    /// Selection threshold for the nvs selector [default: 0.9]
    #[arg(long)]
    lambda: Option<f64>,
    /// Lexicon TSV for the align selector
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Translations kept per source token for the align selector [default: 100]
    #[arg(long)]
    k: Option<usize>,
    /// Timed repetitions after one warm-up pass [default: 30]
    #[arg(long)]
    reps: Option<usize>,
}

pub fn latency(args: &LatencyArgs, cfg: &FileConfig) -> Result<()> {
    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let params: ModelParams<f32> = io::load_model(&args.model)?;
    // The align selector maps lexicon tokens through the target
    // vocabulary; the nvs selector never needs one.
    let tgt_vocab = match &args.tgt_vocab {
        Some(path) => io::load_vocab(path)?,
        None => src_vocab.clone(),
    };
    let selector = SelectorSetup::resolve(
        args.selector,
        args.lambda,
        args.k,
        args.lexicon.as_deref(),
        SelectorKind::NoSelection,
        cfg,
        &src_vocab,
        &tgt_vocab,
    )?;
    let reps = cfg.resolve(args.reps, "reps", 30)?;
    Resolved::default()
        .put("model", args.model.display())
        .put("selector", selector.kind)
        .put("param", selector.param())
        .put("reps", reps)
        .log("bench latency");

    let mut sources = Vec::new();
    for line in io::read_lines(&args.input)? {
        let src = io::encode_line(&src_vocab, &line);
        if src.is_empty() {
            return Err(Error::InvalidInput("empty source sentence".into()));
        }
        sources.push(src);
    }
    let summary = time_decode(&params, &sources, &selector.spec(), reps)?;
    println!(
        "repetitions\tsentences\tavg_vocab_size\n{}\t{}\t{:.4}",
        summary.repetitions, summary.sentences, summary.avg_vocab_size
    );
    println!("stage\tmean_ms\tmean_ci95\tp90_ms\tp90_ci95");
    let row = |name: &str, s: &StageStats| {
        println!(
            "{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            s.mean_ms.mean, s.mean_ms.half_width, s.p90_ms.mean, s.p90_ms.half_width
        );
    };
    row("encode", &summary.encode);
    row("select", &summary.select);
    row("decode", &summary.decode);
    row("total", &summary.total);
    Ok(())
}

// ── bench context ───────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct ContextArgs {
    /// Checkpoint whose selection head to analyze
    #[arg(long)]
    model: PathBuf,
    /// Evaluation TSV; every line needs a span annotation
    #[arg(long)]
    eval: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file
    #[arg(long)]
    tgt_vocab: PathBuf,
    /// Comma-separated selection thresholds [default: 0.9,0.99]
    #[arg(long)]
    lambdas: Option<String>,
    /// TSV destination [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn context(args: &ContextArgs, cfg: &FileConfig) -> Result<()> {
    let lambdas_raw = cfg.resolve(args.lambdas.clone(), "lambdas", "0.9,0.99".into())?;
    let lambdas: Vec<f64> = parse_list(&lambdas_raw, "threshold")?;
    Resolved::default()
        .put("model", args.model.display())
        .put("eval", args.eval.display())
        .put("lambdas", &lambdas_raw)
        .log("bench context");

    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let tgt_vocab = io::load_vocab(&args.tgt_vocab)?;
    let params: ModelParams<f32> = io::load_model(&args.model)?;
    let items = read_eval(&args.eval, &src_vocab, &tgt_vocab)?;
    let report = context_compare(&params, &src_vocab, &items, &lambdas)?;
    emit(args.out.as_ref(), |w| write_context_tsv(&report, w))
}

// ── eval bleu ───────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct BleuArgs {
    /// Hypothesis file, one detokenized sentence per line
    #[arg(long)]
    hyp: PathBuf,
    /// Reference file, line-aligned with --hyp
    #[arg(long)]
    r#ref: PathBuf,
}

pub fn bleu(args: &BleuArgs) -> Result<()> {
    Resolved::default()
        .put("hyp", args.hyp.display())
        .put("ref", args.r#ref.display())
        .log("eval bleu");
    let hyps = io::read_lines(&args.hyp)?;
    let refs = io::read_lines(&args.r#ref)?;
    let score = corpus_bleu(&hyps, &refs)?;
    println!("{score:.4}");
    Ok(())
}
