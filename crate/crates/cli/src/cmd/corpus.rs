//! Corpus preparation subcommands: subword model learning/application,
//! vocabulary construction, parallel-corpus cleaning.

use std::collections::HashMap;
use std::path::PathBuf;

use clap::Args;
use shortlex_core::corpus::{clean_pairs, tokenize, BpeModel, CleanConfig, Vocabulary};
use shortlex_core::Result;

use crate::config::{FileConfig, Resolved};
use crate::io;

// ── bpe learn ───────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct BpeLearnArgs {
    /// Raw text file(s) to learn merges from
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Number of merge operations [default: 1000]
    #[arg(long)]
    merges: Option<usize>,
    /// Where to write the merges file
    #[arg(long)]
    out: PathBuf,
}

pub fn bpe_learn(args: &BpeLearnArgs, cfg: &FileConfig) -> Result<()> {
    let merges = cfg.resolve(args.merges, "merges", 1000)?;
    Resolved::default()
        .put("input", args.input.len())
        .put("merges", merges)
        .put("out", args.out.display())
        .log("bpe learn");

    let mut words = Vec::new();
    for path in &args.input {
        for line in io::read_lines(path)? {
            words.extend(tokenize(&line));
        }
    }
    let model = BpeModel::learn(words.iter().map(String::as_str), merges)?;
    log::info!(
        "learned {} merges from {} words",
        model.merges().len(),
        words.len()
    );
    model.save(io::create(&args.out)?)
}

// ── bpe apply ───────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct BpeApplyArgs {
    /// Merges file from `bpe learn`
    #[arg(long)]
    model: PathBuf,
    /// Raw text input, one sentence per line
    #[arg(long)]
    input: PathBuf,
    /// Segmented output, subwords space-separated
    #[arg(long)]
    output: PathBuf,
}

pub fn bpe_apply(args: &BpeApplyArgs) -> Result<()> {
    Resolved::default()
        .put("model", args.model.display())
        .put("input", args.input.display())
        .put("output", args.output.display())
        .log("bpe apply");

    let model = io::load_bpe(&args.model)?;
    let mut cache = HashMap::new();
    let mut out = Vec::new();
    for line in io::read_lines(&args.input)? {
        let words = tokenize(&line);
        let pieces = model.apply_words(words.iter().map(String::as_str), &mut cache)?;
        out.push(pieces.join(" "));
    }
    io::write_lines(&args.output, out)
}

// ── vocab build ─────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct VocabBuildArgs {
    /// Segmented text file(s), subwords space-separated
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Keep only the most frequent tokens, reserved ids included [default: unlimited]
    #[arg(long)]
    max_size: Option<usize>,
    /// Where to write the vocabulary file
    #[arg(long)]
    out: PathBuf,
}

pub fn vocab_build(args: &VocabBuildArgs, cfg: &FileConfig) -> Result<()> {
    let max_size = match args.max_size {
        Some(n) => Some(n),
        None => cfg.get::<usize>("max-size")?,
    };
    Resolved::default()
        .put("input", args.input.len())
        .put(
            "max-size",
            max_size.map_or("unlimited".into(), |n| n.to_string()),
        )
        .put("out", args.out.display())
        .log("vocab build");

    let mut counts: HashMap<String, u64> = HashMap::new();
    for path in &args.input {
        for line in io::read_lines(path)? {
            for token in line.split_whitespace() {
                *counts.entry(token.to_string()).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(cap) = max_size {
        ranked.truncate(cap.saturating_sub(4));
    }
    let vocab = Vocabulary::from_counts(ranked);
    log::info!("vocabulary of {} entries", vocab.len());
    vocab.save(io::create(&args.out)?)
}

// ── clean ───────────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct CleanArgs {
    /// Segmented source corpus
    #[arg(long)]
    src: PathBuf,
    /// Segmented target corpus, line-aligned with --src
    #[arg(long)]
    tgt: PathBuf,
    /// Filtered source output
    #[arg(long)]
    out_src: PathBuf,
    /// Filtered target output
    #[arg(long)]
    out_tgt: PathBuf,
    /// Maximum length ratio in either direction [default: 1.5]
    #[arg(long)]
    max_ratio: Option<f64>,
    /// Maximum unique-token overlap between sides [default: 0.7]
    #[arg(long)]
    max_overlap: Option<f64>,
    /// Maximum subword tokens per side [default: 100]
    #[arg(long)]
    max_len: Option<usize>,
    /// Optional rejection log: line number and rule, tab-separated
    #[arg(long)]
    rejects: Option<PathBuf>,
}

pub fn clean(args: &CleanArgs, cfg: &FileConfig) -> Result<()> {
    let defaults = CleanConfig::default();
    let clean_cfg = CleanConfig {
        max_ratio: cfg.resolve(args.max_ratio, "max-ratio", defaults.max_ratio)?,
        max_overlap: cfg.resolve(args.max_overlap, "max-overlap", defaults.max_overlap)?,
        max_len: cfg.resolve(args.max_len, "max-len", defaults.max_len)?,
    };
    Resolved::default()
        .put("src", args.src.display())
        .put("tgt", args.tgt.display())
        .put("max-ratio", clean_cfg.max_ratio)
        .put("max-overlap", clean_cfg.max_overlap)
        .put("max-len", clean_cfg.max_len)
        .log("clean");

    let src_lines = io::read_lines(&args.src)?;
    let tgt_lines = io::read_lines(&args.tgt)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(shortlex_core::Error::InvalidInput(format!(
            "{} has {} lines but {} has {}",
            args.src.display(),
            src_lines.len(),
            args.tgt.display(),
            tgt_lines.len()
        )));
    }
    let pairs: Vec<(Vec<&str>, Vec<&str>)> = src_lines
        .iter()
        .zip(&tgt_lines)
        .map(|(s, t)| {
            (
                s.split_whitespace().collect(),
                t.split_whitespace().collect(),
            )
        })
        .collect();
    let (kept, rejected) = clean_pairs(&pairs, &clean_cfg);
    log::info!(
        "kept {} of {} pairs ({} rejected)",
        kept.len(),
        pairs.len(),
        rejected.len()
    );

    io::write_lines(&args.out_src, kept.iter().map(|&i| src_lines[i].as_str()))?;
    io::write_lines(&args.out_tgt, kept.iter().map(|&i| tgt_lines[i].as_str()))?;
    match &args.rejects {
        Some(path) => io::write_lines(
            path,
            rejected
                .iter()
                .map(|(i, rule)| format!("{}\t{rule}", i + 1)),
        )?,
        None => {
            for (i, rule) in &rejected {
                log::debug!("rejected line {}: {rule}", i + 1);
            }
        }
    }
    Ok(())
}
