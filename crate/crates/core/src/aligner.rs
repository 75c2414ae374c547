//! Co-occurrence word alignment trained with EM, plus translation
//! lexicon extraction.
//!
//! The model is a source-to-target translation table `t(f|e)` combined
//! with a fixed positional prior that favors links near the diagonal:
//! `p(i|j) ∝ exp(-tension * |i/I - j/J|)`, normalized over source
//! positions, with 1-based positions. Zero tension gives the uniform
//! prior of the classic lexical-translation model. Because the prior is
//! fixed, each EM iteration can only improve the data log-likelihood.

use crate::corpus::{SentencePair, EOS_ID};
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

const MODEL_HEADER: &[u8] = b"SHORTLEX-ALIGN v1\n";

/// Probabilities below this are dropped from the table after each
/// normalization, then the remainder is rescaled to sum to one.
const PRUNE_THRESHOLD: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub struct AlignConfig {
    pub iterations: usize,
    /// Strength of the diagonal prior; 0 disables it.
    pub diagonal_tension: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            diagonal_tension: 4.0,
        }
    }
}

/// Trained alignment model: per source id, target probabilities sorted
/// by target id. Every non-empty row sums to one (within rounding).
#[derive(Clone, Debug)]
pub struct AlignModel {
    table: Vec<Vec<(u32, f64)>>,
    v_tgt: usize,
    diagonal_tension: f64,
}

impl AlignModel {
    pub fn v_src(&self) -> usize {
        self.table.len()
    }

    pub fn v_tgt(&self) -> usize {
        self.v_tgt
    }

    pub fn diagonal_tension(&self) -> f64 {
        self.diagonal_tension
    }

    /// `t(f|e)`; zero for pairs outside the table.
    pub fn prob(&self, e: u32, f: u32) -> f64 {
        self.table
            .get(e as usize)
            .and_then(|row| {
                row.binary_search_by_key(&f, |&(id, _)| id)
                    .ok()
                    .map(|i| row[i].1)
            })
            .unwrap_or(0.0)
    }

    /// Target entries for one source id, sorted by target id.
    pub fn targets(&self, e: u32) -> &[(u32, f64)] {
        self.table.get(e as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Best-scoring targets: probability descending, ties by target id
    /// ascending.
    pub fn top_k(&self, e: u32, k: usize) -> Vec<(u32, f64)> {
        let mut row = self.targets(e).to_vec();
        row.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("finite probs")
                .then(a.0.cmp(&b.0))
        });
        row.truncate(k);
        row
    }

    pub fn save(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MODEL_HEADER)?;
        w.write_all(&self.diagonal_tension.to_le_bytes())?;
        w.write_all(&(self.table.len() as u32).to_le_bytes())?;
        w.write_all(&(self.v_tgt as u32).to_le_bytes())?;
        for row in &self.table {
            w.write_all(&(row.len() as u32).to_le_bytes())?;
            for &(f, p) in row {
                w.write_all(&f.to_le_bytes())?;
                w.write_all(&p.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; MODEL_HEADER.len()];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("truncated alignment model".into()))?;
        if header != *MODEL_HEADER {
            return Err(Error::Format("not an alignment model file".into()));
        }
        let mut f8 = [0u8; 8];
        let mut f4 = [0u8; 4];
        r.read_exact(&mut f8)?;
        let diagonal_tension = f64::from_le_bytes(f8);
        r.read_exact(&mut f4)?;
        let v_src = u32::from_le_bytes(f4) as usize;
        r.read_exact(&mut f4)?;
        let v_tgt = u32::from_le_bytes(f4) as usize;
        let mut table = Vec::with_capacity(v_src);
        for _ in 0..v_src {
            r.read_exact(&mut f4)?;
            let n = u32::from_le_bytes(f4) as usize;
            let mut row = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut f4)?;
                let f = u32::from_le_bytes(f4);
                r.read_exact(&mut f8)?;
                row.push((f, f64::from_le_bytes(f8)));
            }
            table.push(row);
        }
        Ok(Self {
            table,
            v_tgt,
            diagonal_tension,
        })
    }
}

/// Strips a trailing sentence-end marker; alignment links real tokens only.
fn target_words(pair: &SentencePair) -> &[u32] {
    match pair.target.split_last() {
        Some((&last, rest)) if last == EOS_ID => rest,
        _ => &pair.target,
    }
}

/// Positional prior `p(i|j)` over source positions for one target
/// position, 1-based on both sides.
fn diagonal_prior(i: usize, src_len: usize, j: usize, tgt_len: usize, tension: f64) -> f64 {
    let delta = ((i + 1) as f64 / src_len as f64 - (j + 1) as f64 / tgt_len as f64).abs();
    (-tension * delta).exp()
}

/// Runs EM and returns the model plus the per-iteration data
/// log-likelihood (one entry per iteration, computed against the
/// parameters that iteration started from).
pub fn em_train(
    pairs: &[SentencePair],
    v_src: usize,
    v_tgt: usize,
    cfg: &AlignConfig,
) -> Result<(AlignModel, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("cannot align an empty corpus".into()));
    }
    if cfg.iterations == 0 {
        return Err(Error::InvalidInput("need at least one EM iteration".into()));
    }
    if !(cfg.diagonal_tension.is_finite() && cfg.diagonal_tension >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "diagonal tension {} must be finite and non-negative",
            cfg.diagonal_tension
        )));
    }
    for (n, p) in pairs.iter().enumerate() {
        if p.source.is_empty() || target_words(p).is_empty() {
            return Err(Error::InvalidInput(format!("pair {n} has an empty side")));
        }
        if let Some(&e) = p.source.iter().find(|&&e| e as usize >= v_src) {
            return Err(Error::InvalidInput(format!(
                "source id {e} outside vocabulary of {v_src}"
            )));
        }
        if let Some(&f) = p.target.iter().find(|&&f| f as usize >= v_tgt) {
            return Err(Error::InvalidInput(format!(
                "target id {f} outside vocabulary of {v_tgt}"
            )));
        }
    }

    // Uniform initialization over observed co-occurrences.
    let mut support: Vec<HashMap<u32, f64>> = vec![HashMap::new(); v_src];
    for pair in pairs {
        for &e in &pair.source {
            for &f in target_words(pair) {
                support[e as usize].insert(f, 1.0);
            }
        }
    }
    let mut table = normalize(support, 0)?;

    let mut log_likelihoods = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        let mut counts: Vec<HashMap<u32, f64>> = vec![HashMap::new(); v_src];
        let mut ll = 0.0;
        for pair in pairs {
            let src = &pair.source;
            let tgt = target_words(pair);
            for (j, &f) in tgt.iter().enumerate() {
                let priors: Vec<f64> = (0..src.len())
                    .map(|i| diagonal_prior(i, src.len(), j, tgt.len(), cfg.diagonal_tension))
                    .collect();
                let prior_sum: f64 = priors.iter().sum();
                let mut denom = 0.0;
                for (i, &e) in src.iter().enumerate() {
                    denom += priors[i] / prior_sum * prob_in(&table, e, f);
                }
                if denom <= 0.0 {
                    return Err(Error::Numeric(format!(
                        "alignment posterior vanished for target id {f} at iteration {iter}"
                    )));
                }
                ll += denom.ln();
                for (i, &e) in src.iter().enumerate() {
                    let post = priors[i] / prior_sum * prob_in(&table, e, f) / denom;
                    *counts[e as usize].entry(f).or_insert(0.0) += post;
                }
            }
        }
        log_likelihoods.push(ll);
        table = normalize(counts, iter)?;
    }

    Ok((
        AlignModel {
            table,
            v_tgt,
            diagonal_tension: cfg.diagonal_tension,
        },
        log_likelihoods,
    ))
}

fn prob_in(table: &[Vec<(u32, f64)>], e: u32, f: u32) -> f64 {
    let row = &table[e as usize];
    row.binary_search_by_key(&f, |&(id, _)| id)
        .map(|i| row[i].1)
        .unwrap_or(0.0)
}

/// Turns expected counts into per-source distributions: sort by target
/// id, normalize, prune tiny entries, rescale. Sorting first makes the
/// float sums independent of hash iteration order.
fn normalize(counts: Vec<HashMap<u32, f64>>, iter: usize) -> Result<Vec<Vec<(u32, f64)>>> {
    let mut table = Vec::with_capacity(counts.len());
    for (e, row) in counts.into_iter().enumerate() {
        let mut entries: Vec<(u32, f64)> = row.into_iter().collect();
        entries.sort_by_key(|&(f, _)| f);
        let total: f64 = entries.iter().map(|&(_, c)| c).sum();
        if entries.is_empty() {
            table.push(entries);
            continue;
        }
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Numeric(format!(
                "counts for source id {e} sum to {total} at iteration {iter}"
            )));
        }
        for entry in &mut entries {
            entry.1 /= total;
        }
        entries.retain(|&(_, p)| p >= PRUNE_THRESHOLD);
        let kept: f64 = entries.iter().map(|&(_, p)| p).sum();
        if !(kept.is_finite() && kept > 0.0) {
            return Err(Error::Numeric(format!(
                "pruning removed all mass for source id {e}"
            )));
        }
        for entry in &mut entries {
            entry.1 /= kept;
        }
        table.push(entries);
    }
    Ok(table)
}

// ── Translation lexicon ─────────────────────────────────────────────────

/// Per-source shortlist of the most probable targets, probability
/// descending with ties by target id. Requesting fewer than the stored
/// `k_max` entries always yields a prefix, so shortlists nest.
#[derive(Clone, Debug, PartialEq)]
pub struct TranslationLexicon {
    k_max: usize,
    entries: Vec<Vec<(u32, f64)>>,
}

impl TranslationLexicon {
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn v_src(&self) -> usize {
        self.entries.len()
    }

    /// Total stored entries across all sources.
    pub fn entry_count(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn top_k(&self, e: u32, k: usize) -> &[(u32, f64)] {
        match self.entries.get(e as usize) {
            Some(row) => &row[..k.min(row.len())],
            None => &[],
        }
    }

    /// Writes the grouped tab-separated form, probabilities with six
    /// decimals. Token strings come from the two vocabularies.
    pub fn save_tsv(
        &self,
        src_vocab: &crate::corpus::Vocabulary,
        tgt_vocab: &crate::corpus::Vocabulary,
        mut w: impl Write,
    ) -> Result<()> {
        for (e, row) in self.entries.iter().enumerate() {
            for &(f, p) in row {
                writeln!(
                    w,
                    "{}\t{}\t{:.6}",
                    src_vocab.token(e as u32)?,
                    tgt_vocab.token(f)?,
                    p
                )?;
            }
        }
        Ok(())
    }

    /// Reads the tab-separated form back, mapping tokens through the
    /// vocabularies. Entries must stay grouped by source token.
    pub fn load_tsv(
        src_vocab: &crate::corpus::Vocabulary,
        tgt_vocab: &crate::corpus::Vocabulary,
        r: impl BufRead,
    ) -> Result<Self> {
        let mut entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); src_vocab.len()];
        let mut seen_done: Vec<bool> = vec![false; src_vocab.len()];
        let mut current: Option<u32> = None;
        let mut k_max = 0;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [src_tok, tgt_tok, prob] = fields[..] else {
                return Err(Error::Format(format!(
                    "lexicon line {} is not three fields",
                    n + 1
                )));
            };
            let e = src_vocab
                .lookup_strict(src_tok)
                .ok_or_else(|| Error::Format(format!("unknown source token {src_tok:?}")))?;
            let f = tgt_vocab
                .lookup_strict(tgt_tok)
                .ok_or_else(|| Error::Format(format!("unknown target token {tgt_tok:?}")))?;
            let p: f64 = prob.parse().map_err(|_| {
                Error::Format(format!("bad probability {prob:?} on line {}", n + 1))
            })?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Format(format!("probability {p} outside [0, 1]")));
            }
            if current != Some(e) {
                if seen_done[e as usize] {
                    return Err(Error::Format(format!(
                        "lexicon entries for {src_tok:?} are not contiguous"
                    )));
                }
                if let Some(prev) = current {
                    seen_done[prev as usize] = true;
                }
                current = Some(e);
            }
            entries[e as usize].push((f, p));
            k_max = k_max.max(entries[e as usize].len());
        }
        Ok(Self { k_max, entries })
    }
}

/// Takes the `k_max` best targets per source from a trained model.
pub fn extract_lexicon(model: &AlignModel, k_max: usize) -> Result<TranslationLexicon> {
    if k_max == 0 {
        return Err(Error::InvalidInput("lexicon needs k_max >= 1".into()));
    }
    let entries = (0..model.v_src())
        .map(|e| model.top_k(e as u32, k_max))
        .collect();
    Ok(TranslationLexicon { k_max, entries })
}

/// Concatenates the in-domain pairs `upsample` times onto the base
/// corpus, the usual recipe before re-running EM for domain adaptation.
pub fn upsampled_concat(
    base: &[SentencePair],
    adapt: &[SentencePair],
    upsample: usize,
) -> Vec<SentencePair> {
    let mut out = Vec::with_capacity(base.len() + adapt.len() * upsample);
    out.extend_from_slice(base);
    for _ in 0..upsample {
        out.extend_from_slice(adapt);
    }
    out
}

/// Retrains alignment on base data plus upsampled in-domain data.
pub fn adapt_align(
    base: &[SentencePair],
    adapt: &[SentencePair],
    upsample: usize,
    v_src: usize,
    v_tgt: usize,
    cfg: &AlignConfig,
) -> Result<(AlignModel, Vec<f64>)> {
    em_train(&upsampled_concat(base, adapt, upsample), v_src, v_tgt, cfg)
}
