//! Alignment subcommands: EM training of the translation table and
//! top-k lexicon extraction.

use std::path::PathBuf;

use clap::Args;
use shortlex_core::aligner::{adapt_align, em_train, extract_lexicon, AlignConfig};
use shortlex_core::{Error, Result};

use crate::config::{FileConfig, Resolved};
use crate::io;

// ── align train ─────────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct AlignTrainArgs {
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
    /// EM iterations [default: 5]
    #[arg(long)]
    iters: Option<usize>,
    /// Strength of the diagonal position prior; 0 disables it [default: 4.0]
    #[arg(long)]
    diagonal_tension: Option<f64>,
    /// Optional adaptation source corpus, trained upsampled alongside --src
    #[arg(long, requires = "adapt_tgt")]
    adapt_src: Option<PathBuf>,
    /// Optional adaptation target corpus
    #[arg(long, requires = "adapt_src")]
    adapt_tgt: Option<PathBuf>,
    /// Copies of the adaptation corpus to train on [default: 10]
    #[arg(long)]
    upsample: Option<usize>,
    /// Where to write the alignment model
    #[arg(long)]
    out: PathBuf,
}

pub fn train(args: &AlignTrainArgs, cfg: &FileConfig) -> Result<()> {
    let defaults = AlignConfig::default();
    let align_cfg = AlignConfig {
        iterations: cfg.resolve(args.iters, "iters", defaults.iterations)?,
        diagonal_tension: cfg.resolve(
            args.diagonal_tension,
            "diagonal-tension",
            defaults.diagonal_tension,
        )?,
    };
    let upsample = cfg.resolve(args.upsample, "upsample", 10)?;
    Resolved::default()
        .put("src", args.src.display())
        .put("tgt", args.tgt.display())
        .put("iters", align_cfg.iterations)
        .put("diagonal-tension", align_cfg.diagonal_tension)
        .put("upsample", upsample)
        .put("out", args.out.display())
        .log("align train");

    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let tgt_vocab = io::load_vocab(&args.tgt_vocab)?;
    let pairs = io::read_pairs(&args.src, &args.tgt, &src_vocab, &tgt_vocab)?;

    let (model, ll) = match (&args.adapt_src, &args.adapt_tgt) {
        (Some(asrc), Some(atgt)) => {
            let adapt = io::read_pairs(asrc, atgt, &src_vocab, &tgt_vocab)?;
            adapt_align(
                &pairs,
                &adapt,
                upsample,
                src_vocab.len(),
                tgt_vocab.len(),
                &align_cfg,
            )?
        }
        _ => em_train(&pairs, src_vocab.len(), tgt_vocab.len(), &align_cfg)?,
    };
    for (i, l) in ll.iter().enumerate() {
        log::info!("iteration {}: log-likelihood {l:.4}", i + 1);
    }
    model.save(io::create(&args.out)?)
}

// ── lexicon extract ─────────────────────────────────────────────────────

#[derive(Args, Debug)]
pub struct LexiconExtractArgs {
    /// Alignment model from `align train`
    #[arg(long)]
    model: PathBuf,
    /// Source vocabulary file
    #[arg(long)]
    src_vocab: PathBuf,
    /// Target vocabulary file
    #[arg(long)]
    tgt_vocab: PathBuf,
    /// Candidates kept per source token [default: 200]
    #[arg(long)]
    k_max: Option<usize>,
    /// Where to write the lexicon TSV
    #[arg(long)]
    out: PathBuf,
}

pub fn extract(args: &LexiconExtractArgs, cfg: &FileConfig) -> Result<()> {
    let k_max = cfg.resolve(args.k_max, "k-max", 200)?;
    if k_max == 0 {
        return Err(Error::InvalidInput("k-max must be at least 1".into()));
    }
    Resolved::default()
        .put("model", args.model.display())
        .put("k-max", k_max)
        .put("out", args.out.display())
        .log("lexicon extract");

    let src_vocab = io::load_vocab(&args.src_vocab)?;
    let tgt_vocab = io::load_vocab(&args.tgt_vocab)?;
    let model = io::load_align_model(&args.model)?;
    let lexicon = extract_lexicon(&model, k_max)?;
    log::info!("lexicon holds {} entries", lexicon.entry_count());
    lexicon.save_tsv(&src_vocab, &tgt_vocab, io::create(&args.out)?)
}
