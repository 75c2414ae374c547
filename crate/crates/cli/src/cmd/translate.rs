//! Decoding subcommands: translation with optional vocabulary selection,
//! and per-sentence selected-vocabulary dumps.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use shortlex_core::aligner::TranslationLexicon;
use shortlex_core::corpus::{detokenize, Vocabulary};
use shortlex_core::decode::{translate_sentence, BeamConfig, SelectorSpec};
use shortlex_core::nmt::{encode, nvs_scores, ModelParams};
use shortlex_core::selection::{bow_token_line, select_align, select_nvs};
use shortlex_core::{Error, Result};

use crate::cmd::SelectorKind;
use crate::config::{FileConfig, Resolved};
use crate::io;

// ── selector resolution ─────────────────────────────────────────────────

/// Everything a selector needs at run time; owns the lexicon so the
/// borrow in `SelectorSpec` has a home.
pub struct SelectorSetup {
    pub kind: SelectorKind,
    pub lambda: f64,
    pub k: usize,
    pub lexicon: Option<TranslationLexicon>,
}

impl SelectorSetup {
    /// Resolves flags, config file, and defaults; loads the lexicon when
    /// the align selector asks for one.
    pub fn resolve(
        kind: Option<SelectorKind>,
        lambda: Option<f64>,
        k: Option<usize>,
        lexicon_path: Option<&Path>,
        default_kind: SelectorKind,
        cfg: &FileConfig,
        src_vocab: &Vocabulary,
        tgt_vocab: &Vocabulary,
    ) -> Result<Self> {
        let kind = cfg.resolve(kind, "selector", default_kind)?;
        let lambda = cfg.resolve(lambda, "lambda", 0.9)?;
        let k = cfg.resolve(k, "k", 100)?;
        let lexicon = match kind {
            SelectorKind::Align => {
                let path = match lexicon_path {
                    Some(p) => p.to_path_buf(),
                    None => PathBuf::from(cfg.require::<String>(None, "lexicon")?),
                };
                Some(io::load_lexicon(&path, src_vocab, tgt_vocab)?)
            }
            _ => None,
        };
        Ok(Self {
            kind,
            lambda,
            k,
            lexicon,
        })
    }

    pub fn spec(&self) -> SelectorSpec<'_> {
        match self.kind {
            SelectorKind::NoSelection => SelectorSpec::Full,
            SelectorKind::Nvs => SelectorSpec::Nvs {
                lambda: self.lambda,
            },
            SelectorKind::Align => SelectorSpec::Align {
                lexicon: self
                    .lexicon
                    .as_ref()
                    .expect("align selector loads a lexicon"),
                k: self.k,
            },
        }
    }

    /// The parameter that identifies this selector in logs.
    pub fn param(&self) -> String {
        match self.kind {
            SelectorKind::NoSelection => "-".into(),
            SelectorKind::Nvs => format!("lambda={}", self.lambda),
            SelectorKind::Align => format!("k={}", self.k),
        }
    }
}

// ── translate ───────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct TranslateArgs {
    /// Checkpoint to decode with
    #[arg(long)]
    model: PathBuf,
    /// Segmented source input, one sentence per line
    #[arg(long)]
    input: PathBuf,
    /// Detokenized translations, one per line
    #[arg(long)]
    output: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file
    #[arg(long)]
    tgt_vocab: PathBuf,
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
    /// Beam size [default: 5]
    #[arg(long)]
    beam: Option<usize>,
    /// Length-normalization exponent [default: 1.0]
    #[arg(long)]
    alpha: Option<f64>,
    /// Side metrics file [default: <output>.metrics.tsv]
    #[arg(long)]
    metrics: Option<PathBuf>,
}

pub fn translate(args: &TranslateArgs, cfg: &FileConfig) -> Result<()> {
    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let tgt_vocab = io::load_vocab(&args.tgt_vocab)?;
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
    let beam = cfg.resolve(args.beam, "beam", 5)?;
    let alpha = cfg.resolve(args.alpha, "alpha", 1.0)?;
    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| args.output.with_extension("metrics.tsv"));
    Resolved::default()
        .put("model", args.model.display())
        .put("selector", selector.kind)
        .put("param", selector.param())
        .put("beam", beam)
        .put("alpha", alpha)
        .put("input", args.input.display())
        .put("output", args.output.display())
        .put("metrics", metrics_path.display())
        .log("translate");

    let params: ModelParams<f32> = io::load_model(&args.model)?;
    let mut out = io::create(&args.output)?;
    let mut metrics = io::create(&metrics_path)?;
    writeln!(
        metrics,
        "vocab_size\tscore\tencode_ms\tselect_ms\tdecode_ms"
    )?;
    for line in io::read_lines(&args.input)? {
        let src = io::encode_line(&src_vocab, &line);
        if src.is_empty() {
            return Err(Error::InvalidInput("empty source sentence".into()));
        }
        let mut beam_cfg = BeamConfig::for_source_len(src.len());
        beam_cfg.beam = beam;
        beam_cfg.alpha = alpha;
        let result = translate_sentence(&params, &src, &selector.spec(), Some(beam_cfg))?;
        let tokens: Vec<&str> = result
            .tokens
            .iter()
            .map(|&id| tgt_vocab.token(id))
            .collect::<Result<_>>()?;
        writeln!(out, "{}", detokenize(&tokens))?;
        writeln!(
            metrics,
            "{}\t{:.6}\t{:.3}\t{:.3}\t{:.3}",
            result.vocab_size,
            result.score,
            result.timing.encode.as_secs_f64() * 1e3,
            result.timing.select.as_secs_f64() * 1e3,
            result.timing.decode.as_secs_f64() * 1e3,
        )?;
    }
    out.flush()?;
    metrics.flush()?;
    Ok(())
}

// ── bow ─────────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct BowArgs {
    /// Checkpoint whose selection head to use (nvs selector)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Segmented source input, one sentence per line
    #[arg(long)]
    input: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file
    #[arg(long)]
    tgt_vocab: PathBuf,
    /// Vocabulary selector: nvs or align [default: nvs]
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
    /// Selected tokens per sentence, tab-separated [default: stdout]
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn bow(args: &BowArgs, cfg: &FileConfig) -> Result<()> {
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
    Resolved::default()
        .put("selector", selector.kind)
        .put("param", selector.param())
        .put("input", args.input.display())
        .log("bow");

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

    let mut lines = Vec::new();
    for line in io::read_lines(&args.input)? {
        let src = io::encode_line(&src_vocab, &line);
        if src.is_empty() {
            return Err(Error::InvalidInput("empty source sentence".into()));
        }
        let bow = match selector.kind {
            SelectorKind::Align => {
                let lexicon = selector
                    .lexicon
                    .as_ref()
                    .expect("align selector loads a lexicon");
                select_align(lexicon, &src, selector.k, tgt_vocab.len())?
            }
            _ => {
                let params = params.as_ref().expect("checked above");
                let enc = encode(params, &src)?;
                let z = nvs_scores(params, &enc)?;
                // The full-vocabulary case is lambda = 0.
                let lambda = match selector.kind {
                    SelectorKind::NoSelection => 0.0,
                    _ => selector.lambda,
                };
                select_nvs(&z, lambda)?
            }
        };
        lines.push(bow_token_line(&bow, &tgt_vocab)?);
    }
    match &args.output {
        Some(path) => io::write_lines(path, lines),
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for line in lines {
                writeln!(w, "{line}")?;
            }
            Ok(())
        }
    }
}
