//! Quality and speed measurement: recall of reference tokens, vocabulary
//! size sweeps, corpus BLEU, decode latency under a repetition protocol,
//! and the contextual-vs-per-word selection comparison.

use crate::aligner::TranslationLexicon;
use crate::corpus::{SentencePair, Vocabulary, END_OF_WORD, EOS_ID};
use crate::decode::{translate_sentence, SelectorSpec};
use crate::error::{Error, Result};
use crate::nmt::{encode, nvs_scores, ModelParams};
use crate::numerics::Real;
use crate::selection::{select_align, select_nvs, BagOfWords};
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::ops::Range;
use std::sync::OnceLock;

// ── Evaluation items ────────────────────────────────────────────────────

/// One evaluation sentence: source ids, reference ids, and optionally a
/// pair of half-open token ranges marking an annotated expression on
/// each side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalItem {
    pub source: Vec<u32>,
    pub reference: Vec<u32>,
    pub span: Option<(Range<usize>, Range<usize>)>,
}

impl EvalItem {
    pub fn new(
        source: Vec<u32>,
        reference: Vec<u32>,
        span: Option<(Range<usize>, Range<usize>)>,
    ) -> Result<Self> {
        if source.is_empty() || reference.is_empty() {
            return Err(Error::InvalidInput(
                "evaluation item with an empty side".into(),
            ));
        }
        if let Some((src, rf)) = &span {
            check_span(src, source.len(), "source")?;
            check_span(rf, reference.len(), "reference")?;
        }
        Ok(Self {
            source,
            reference,
            span,
        })
    }

    /// Reuses a training pair as an unannotated item; the trailing
    /// end-of-sentence id is dropped from the reference.
    pub fn from_pair(pair: &SentencePair) -> Result<Self> {
        let mut reference = pair.target.clone();
        if reference.last() == Some(&EOS_ID) {
            reference.pop();
        }
        Self::new(pair.source.clone(), reference, None)
    }
}

fn check_span(r: &Range<usize>, len: usize, side: &str) -> Result<()> {
    if r.start > r.end || r.end > len {
        return Err(Error::InvalidInput(format!(
            "{side} span {}:{} outside sentence of {len} tokens",
            r.start, r.end
        )));
    }
    Ok(())
}

/// Reads a TSV evaluation set: `source⟨TAB⟩reference` with two optional
/// trailing fields `src_start:src_end⟨TAB⟩ref_start:ref_end`, token
/// indices half-open. Token strings are mapped through the vocabularies
/// (unknowns become the unknown id). Blank lines are skipped.
pub fn read_eval_tsv(
    r: impl BufRead,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
) -> Result<Vec<EvalItem>> {
    let mut items = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 && fields.len() != 4 {
            return Err(Error::Format(format!(
                "line {}: expected 2 or 4 tab-separated fields, found {}",
                ln + 1,
                fields.len()
            )));
        }
        let source = encode_field(fields[0], src_vocab);
        let reference = encode_field(fields[1], tgt_vocab);
        let span = if fields.len() == 4 {
            Some((
                parse_range(fields[2], ln + 1)?,
                parse_range(fields[3], ln + 1)?,
            ))
        } else {
            None
        };
        items.push(EvalItem::new(source, reference, span)?);
    }
    Ok(items)
}

fn encode_field(field: &str, vocab: &Vocabulary) -> Vec<u32> {
    let tokens: Vec<&str> = field.split_whitespace().collect();
    vocab.encode(&tokens)
}

fn parse_range(field: &str, line: usize) -> Result<Range<usize>> {
    let (s, e) = field
        .split_once(':')
        .ok_or_else(|| Error::Format(format!("line {line}: range {field:?} is not start:end")))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| Error::Format(format!("line {line}: bad range bound {v:?}")))
    };
    Ok(parse(s)?..parse(e)?)
}

/// Writes the same TSV shape [`read_eval_tsv`] parses.
pub fn write_eval_tsv(
    items: &[EvalItem],
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    mut w: impl Write,
) -> Result<()> {
    for item in items {
        let src = ids_to_line(&item.source, src_vocab)?;
        let rf = ids_to_line(&item.reference, tgt_vocab)?;
        match &item.span {
            None => writeln!(w, "{src}\t{rf}")?,
            Some((s, r)) => writeln!(
                w,
                "{src}\t{rf}\t{}:{}\t{}:{}",
                s.start, s.end, r.start, r.end
            )?,
        }
    }
    Ok(())
}

fn ids_to_line(ids: &[u32], vocab: &Vocabulary) -> Result<String> {
    let tokens: Result<Vec<&str>> = ids.iter().map(|&id| vocab.token(id)).collect();
    Ok(tokens?.join(" "))
}

// ── Recall and vocabulary size ──────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecallScope {
    Sentence,
    Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    /// Mean of per-sentence percentages (the default elsewhere).
    Macro,
    /// Pooled counts across sentences.
    Micro,
}

/// Unique reference ids that carry information: the four reserved ids
/// never count, in the numerator or the denominator.
fn effective_unique(ids: &[u32]) -> HashSet<u32> {
    ids.iter()
        .copied()
        .filter(|&id| !Vocabulary::is_special(id))
        .collect()
}

/// Percentage of unique in-scope reference tokens present in the set.
/// `Ok(None)` means the scope holds no countable tokens; span scope on
/// an unannotated item is an error.
pub fn recall(bow: &BagOfWords, item: &EvalItem, scope: RecallScope) -> Result<Option<f64>> {
    let tokens: &[u32] = match scope {
        RecallScope::Sentence => &item.reference,
        RecallScope::Span => {
            let (_, rf) = item
                .span
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("span recall on an unannotated item".into()))?;
            &item.reference[rf.clone()]
        }
    };
    let unique = effective_unique(tokens);
    if unique.is_empty() {
        return Ok(None);
    }
    let hit = unique.iter().filter(|&&t| bow.contains(t)).count();
    Ok(Some(100.0 * hit as f64 / unique.len() as f64))
}

/// Corpus recall over per-sentence selections. Span scope silently
/// skips unannotated items; sentences with no countable tokens are
/// skipped in both scopes. Errors if nothing remains.
pub fn corpus_recall(
    bows: &[BagOfWords],
    items: &[EvalItem],
    scope: RecallScope,
    averaging: Averaging,
) -> Result<f64> {
    if bows.len() != items.len() {
        return Err(Error::InvalidInput(format!(
            "{} selections for {} items",
            bows.len(),
            items.len()
        )));
    }
    let mut per_sentence = Vec::new();
    let (mut hits, mut total) = (0usize, 0usize);
    for (bow, item) in bows.iter().zip(items) {
        if scope == RecallScope::Span && item.span.is_none() {
            continue;
        }
        let tokens: &[u32] = match scope {
            RecallScope::Sentence => &item.reference,
            RecallScope::Span => {
                let (_, rf) = item.span.as_ref().expect("filtered above");
                &item.reference[rf.clone()]
            }
        };
        let unique = effective_unique(tokens);
        if unique.is_empty() {
            continue;
        }
        let hit = unique.iter().filter(|&&t| bow.contains(t)).count();
        per_sentence.push(100.0 * hit as f64 / unique.len() as f64);
        hits += hit;
        total += unique.len();
    }
    if per_sentence.is_empty() {
        return Err(Error::InvalidInput(
            "no sentence with countable reference tokens".into(),
        ));
    }
    Ok(match averaging {
        Averaging::Macro => per_sentence.iter().sum::<f64>() / per_sentence.len() as f64,
        Averaging::Micro => 100.0 * hits as f64 / total as f64,
    })
}

/// Mean selected-set size across sentences.
pub fn avg_vocab_size(bows: &[BagOfWords]) -> Result<f64> {
    if bows.is_empty() {
        return Err(Error::InvalidInput("no selections to average".into()));
    }
    Ok(bows.iter().map(|b| b.len() as f64).sum::<f64>() / bows.len() as f64)
}

// ── Sweeps ──────────────────────────────────────────────────────────────

/// One point of a vocabulary-size-vs-recall curve.
#[derive(Clone, Debug)]
pub struct BenchRecord {
    pub selector: String,
    /// Threshold for the learned selector, shortlist depth for the
    /// lexicon one.
    pub param: f64,
    pub avg_vocab_size: f64,
    pub recall_sentence: f64,
    pub recall_span: Option<f64>,
    pub bleu: Option<f64>,
}

/// Published threshold grid, descending.
pub fn lambda_grid() -> Vec<f64> {
    vec![0.99, 0.9, 0.5, 0.1, 0.01, 1e-3, 1e-4, 1e-5, 1e-6]
}

/// Published depth grid: 100..1000 by hundreds, then 2000..10000 by
/// thousands, each point capped at the lexicon depth and the vocabulary
/// size, deduplicated.
pub fn k_grid(k_max: usize, v_tgt: usize) -> Vec<usize> {
    let cap = k_max.min(v_tgt);
    let raw = (1..=10).map(|i| i * 100).chain((2..=10).map(|i| i * 1000));
    let mut grid: Vec<usize> = raw.map(|k| k.min(cap)).collect();
    grid.dedup();
    grid
}

/// Sweeps the learned selector across thresholds. Presence scores are
/// computed once per sentence and re-thresholded per grid point.
pub fn sweep_nvs<T: Real>(
    params: &ModelParams<T>,
    items: &[EvalItem],
    lambdas: &[f64],
) -> Result<Vec<BenchRecord>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("empty threshold grid".into()));
    }
    let mut scores = Vec::with_capacity(items.len());
    for item in items {
        let enc = encode(params, &item.source)?;
        scores.push(nvs_scores(params, &enc)?);
    }
    let mut records = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let bows: Result<Vec<BagOfWords>> = scores.iter().map(|z| select_nvs(z, lambda)).collect();
        records.push(record_for("nvs", lambda, &bows?, items)?);
    }
    Ok(records)
}

/// Sweeps the lexicon selector across shortlist depths.
pub fn sweep_align(
    lexicon: &TranslationLexicon,
    items: &[EvalItem],
    ks: &[usize],
    v_tgt: usize,
) -> Result<Vec<BenchRecord>> {
    if ks.is_empty() {
        return Err(Error::InvalidInput("empty depth grid".into()));
    }
    let mut records = Vec::with_capacity(ks.len());
    for &k in ks {
        let bows: Result<Vec<BagOfWords>> = items
            .iter()
            .map(|it| select_align(lexicon, &it.source, k, v_tgt))
            .collect();
        records.push(record_for("align", k as f64, &bows?, items)?);
    }
    Ok(records)
}

fn record_for(
    selector: &str,
    param: f64,
    bows: &[BagOfWords],
    items: &[EvalItem],
) -> Result<BenchRecord> {
    let any_span = items.iter().any(|it| it.span.is_some());
    Ok(BenchRecord {
        selector: selector.to_string(),
        param,
        avg_vocab_size: avg_vocab_size(bows)?,
        recall_sentence: corpus_recall(bows, items, RecallScope::Sentence, Averaging::Macro)?,
        recall_span: if any_span {
            Some(corpus_recall(
                bows,
                items,
                RecallScope::Span,
                Averaging::Macro,
            )?)
        } else {
            None
        },
        bleu: None,
    })
}

fn format_param(p: f64) -> String {
    if p.fract() == 0.0 && p.abs() < 1e12 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

/// Writes sweep records as CSV with the fixed column set.
pub fn write_sweep_csv(records: &[BenchRecord], mut w: impl Write) -> Result<()> {
    writeln!(
        w,
        "selector,param,avg_vocab_size,recall_sentence,recall_span"
    )?;
    for r in records {
        let span = r.recall_span.map(|v| format!("{v:.4}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{:.4},{:.4},{}",
            r.selector,
            format_param(r.param),
            r.avg_vocab_size,
            r.recall_sentence,
            span
        )?;
    }
    Ok(())
}

// ── BLEU ────────────────────────────────────────────────────────────────

fn regexes_13a() -> &'static [(regex::Regex, &'static str)] {
    static RULES: OnceLock<Vec<(regex::Regex, &'static str)>> = OnceLock::new();
    RULES.get_or_init(|| {
        vec![
            // ASCII punctuation except period, comma, dash, apostrophe.
            (
                regex::Regex::new(r"([\x20-\x26\(-\+\:-@/\[-\x60\{-\~])").unwrap(),
                " $1 ",
            ),
            // Period and comma split unless both neighbors are digits.
            (regex::Regex::new(r"([^0-9])([\.,])").unwrap(), "$1 $2 "),
            (regex::Regex::new(r"([\.,])([^0-9])").unwrap(), " $1 $2"),
            // Dash splits after a digit.
            (regex::Regex::new(r"([0-9])(\-)").unwrap(), "$1 $2 "),
        ]
    })
}

/// Baseline international tokenization used for scoring: punctuation is
/// split from words with the digit-aware period/comma/dash exceptions.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut s = line.to_string();
    for (re, rep) in regexes_13a() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.split_whitespace().map(str::to_string).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *counts.entry(&tokens[i..i + n]).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus 4-gram BLEU with brevity penalty and exponential smoothing:
/// every zero-match order halves the substituted numerator again. A
/// corpus with no n-grams of some order scores zero.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(hyps: &[H], refs: &[R]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::InvalidInput(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if hyps.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    const ORDER: usize = 4;
    let mut matches = [0u64; ORDER];
    let mut totals = [0u64; ORDER];
    let (mut hyp_len, mut ref_len) = (0u64, 0u64);
    for (h, r) in hyps.iter().zip(refs) {
        let h = tokenize_13a(h.as_ref());
        let r = tokenize_13a(r.as_ref());
        hyp_len += h.len() as u64;
        ref_len += r.len() as u64;
        for n in 1..=ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            for (g, &c) in &hc {
                matches[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
            totals[n - 1] += h.len().saturating_sub(n - 1) as u64;
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut product = 1.0f64;
    let mut smooth = 1.0f64;
    for n in 0..ORDER {
        if totals[n] == 0 {
            return Ok(0.0);
        }
        let ratio = if matches[n] == 0 {
            smooth *= 2.0;
            1.0 / (smooth * totals[n] as f64)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        product *= ratio;
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(100.0 * bp * product.powf(1.0 / ORDER as f64))
}

// ── Latency protocol ────────────────────────────────────────────────────

/// Mean with a normal-approximation 95% half-width.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
}

fn mean_ci(xs: &[f64]) -> MeanCi {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return MeanCi {
            mean,
            half_width: 0.0,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MeanCi {
        mean,
        half_width: 1.96 * (var / n).sqrt(),
    }
}

/// Nearest-rank 90th percentile.
fn p90(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let rank = ((0.9 * sorted.len() as f64).ceil() as usize).max(1);
    sorted[rank - 1]
}

/// Per-stage timing statistics across repetitions: each repetition's
/// per-sentence times are reduced to a mean and a p90, and those are
/// averaged across repetitions with confidence intervals.
#[derive(Clone, Copy, Debug, Default)]
pub struct StageStats {
    pub mean_ms: MeanCi,
    pub p90_ms: MeanCi,
}

#[derive(Clone, Debug)]
pub struct LatencySummary {
    pub repetitions: usize,
    pub sentences: usize,
    pub avg_vocab_size: f64,
    pub encode: StageStats,
    pub select: StageStats,
    pub decode: StageStats,
    pub total: StageStats,
}

fn stage_stats(per_rep: &[Vec<f64>]) -> StageStats {
    let means: Vec<f64> = per_rep.iter().map(|xs| mean_ci(xs).mean).collect();
    let p90s: Vec<f64> = per_rep.iter().map(|xs| p90(xs)).collect();
    StageStats {
        mean_ms: mean_ci(&means),
        p90_ms: mean_ci(&p90s),
    }
}

/// Times translation sentence by sentence over `repetitions` identical
/// passes, after one excluded warm-up pass.
pub fn time_decode<T: Real>(
    params: &ModelParams<T>,
    sources: &[Vec<u32>],
    selector: &SelectorSpec,
    repetitions: usize,
) -> Result<LatencySummary> {
    if repetitions == 0 {
        return Err(Error::InvalidInput(
            "at least one repetition required".into(),
        ));
    }
    if sources.is_empty() {
        return Err(Error::InvalidInput("no sentences to time".into()));
    }
    let mut sizes = 0usize;
    for src in sources {
        sizes += translate_sentence(params, src, selector, None)?.vocab_size;
    }
    let mut encode_ms = Vec::with_capacity(repetitions);
    let mut select_ms = Vec::with_capacity(repetitions);
    let mut decode_ms = Vec::with_capacity(repetitions);
    let mut total_ms = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let mut enc = Vec::with_capacity(sources.len());
        let mut sel = Vec::with_capacity(sources.len());
        let mut dec = Vec::with_capacity(sources.len());
        let mut tot = Vec::with_capacity(sources.len());
        for src in sources {
            let out = translate_sentence(params, src, selector, None)?;
            enc.push(out.timing.encode.as_secs_f64() * 1e3);
            sel.push(out.timing.select.as_secs_f64() * 1e3);
            dec.push(out.timing.decode.as_secs_f64() * 1e3);
            tot.push(out.timing.total().as_secs_f64() * 1e3);
        }
        encode_ms.push(enc);
        select_ms.push(sel);
        decode_ms.push(dec);
        total_ms.push(tot);
    }
    Ok(LatencySummary {
        repetitions,
        sentences: sources.len(),
        avg_vocab_size: sizes as f64 / sources.len() as f64,
        encode: stage_stats(&encode_ms),
        select: stage_stats(&select_ms),
        decode: stage_stats(&decode_ms),
        total: stage_stats(&total_ms),
    })
}

// ── Contextual vs per-word selection ────────────────────────────────────

/// Per-sentence coverage flags for one threshold: whether all annotated
/// reference tokens are in the full-sentence selection, in the union of
/// per-word selections, and in exactly one of the two.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ContextFlags {
    pub all_contextual: bool,
    pub all_noncontextual: bool,
    pub exclusive_contextual: bool,
    pub exclusive_noncontextual: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct ContextSummary {
    pub lambda: f64,
    pub sentences: usize,
    pub all_contextual_pct: f64,
    pub all_noncontextual_pct: f64,
    pub exclusive_contextual_pct: f64,
    pub exclusive_noncontextual_pct: f64,
}

#[derive(Clone, Debug)]
pub struct ContextReport {
    /// `flags[l][s]`: sentence `s` under `lambdas[l]`.
    pub flags: Vec<Vec<ContextFlags>>,
    pub summaries: Vec<ContextSummary>,
}

/// Default thresholds for the comparison.
pub const CONTEXT_LAMBDAS: [f64; 2] = [0.9, 0.99];

/// Groups source ids into words: a word ends at each token whose string
/// carries the end-of-word marker; a trailing unmarked group still
/// counts as a word.
pub fn source_word_groups(src: &[u32], vocab: &Vocabulary) -> Result<Vec<Vec<u32>>> {
    let mut groups = Vec::new();
    let mut current = Vec::new();
    for &id in src {
        current.push(id);
        if vocab.token(id)?.ends_with(END_OF_WORD) {
            groups.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        groups.push(current);
    }
    Ok(groups)
}

/// Compares full-sentence selection against the union of selections made
/// for each source word in isolation, judged on the annotated reference
/// tokens. Every item must carry a span; items whose span holds no
/// countable tokens are skipped.
pub fn context_compare<T: Real>(
    params: &ModelParams<T>,
    src_vocab: &Vocabulary,
    items: &[EvalItem],
    lambdas: &[f64],
) -> Result<ContextReport> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("no thresholds given".into()));
    }
    // (span tokens, sentence scores, per-word scores), annotated only.
    let mut prepared = Vec::new();
    for item in items {
        let (_, rf) = item.span.as_ref().ok_or_else(|| {
            Error::InvalidInput("context comparison needs span annotations".into())
        })?;
        let span_tokens = effective_unique(&item.reference[rf.clone()]);
        if span_tokens.is_empty() {
            continue;
        }
        let enc = encode(params, &item.source)?;
        let z_sentence = nvs_scores(params, &enc)?;
        let mut z_words = Vec::new();
        for word in source_word_groups(&item.source, src_vocab)? {
            let enc_w = encode(params, &word)?;
            z_words.push(nvs_scores(params, &enc_w)?);
        }
        prepared.push((span_tokens, z_sentence, z_words));
    }
    if prepared.is_empty() {
        return Err(Error::InvalidInput(
            "no annotated sentence with countable tokens".into(),
        ));
    }

    let mut flags = Vec::with_capacity(lambdas.len());
    let mut summaries = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut per_sentence = Vec::with_capacity(prepared.len());
        let (mut ac, mut an, mut ec, mut en) = (0usize, 0usize, 0usize, 0usize);
        for (span_tokens, z_sentence, z_words) in &prepared {
            let contextual = select_nvs(z_sentence, lambda)?;
            let mut noncontextual = BagOfWords::from_ids([], contextual.vocab_size())?;
            for z in z_words {
                noncontextual = noncontextual.union(&select_nvs(z, lambda)?)?;
            }
            let all_c = span_tokens.iter().all(|&t| contextual.contains(t));
            let all_n = span_tokens.iter().all(|&t| noncontextual.contains(t));
            let f = ContextFlags {
                all_contextual: all_c,
                all_noncontextual: all_n,
                exclusive_contextual: all_c && !all_n,
                exclusive_noncontextual: all_n && !all_c,
            };
            ac += f.all_contextual as usize;
            an += f.all_noncontextual as usize;
            ec += f.exclusive_contextual as usize;
            en += f.exclusive_noncontextual as usize;
            per_sentence.push(f);
        }
        let n = per_sentence.len() as f64;
        summaries.push(ContextSummary {
            lambda,
            sentences: per_sentence.len(),
            all_contextual_pct: 100.0 * ac as f64 / n,
            all_noncontextual_pct: 100.0 * an as f64 / n,
            exclusive_contextual_pct: 100.0 * ec as f64 / n,
            exclusive_noncontextual_pct: 100.0 * en as f64 / n,
        });
        flags.push(per_sentence);
    }
    Ok(ContextReport { flags, summaries })
}

/// Writes per-sentence flags as TSV rows followed by a commented
/// aggregate block.
pub fn write_context_tsv(report: &ContextReport, mut w: impl Write) -> Result<()> {
    writeln!(
        w,
        "lambda\tsentence\tall_contextual\tall_noncontextual\texclusive_contextual\texclusive_noncontextual"
    )?;
    for (li, per_sentence) in report.flags.iter().enumerate() {
        let lambda = report.summaries[li].lambda;
        for (si, f) in per_sentence.iter().enumerate() {
            writeln!(
                w,
                "{lambda}\t{si}\t{}\t{}\t{}\t{}",
                f.all_contextual as u8,
                f.all_noncontextual as u8,
                f.exclusive_contextual as u8,
                f.exclusive_noncontextual as u8
            )?;
        }
    }
    for s in &report.summaries {
        writeln!(
            w,
            "# lambda={} sentences={} all_contextual={:.2}% all_noncontextual={:.2}% \
             exclusive_contextual={:.2}% exclusive_noncontextual={:.2}%",
            s.lambda,
            s.sentences,
            s.all_contextual_pct,
            s.all_noncontextual_pct,
            s.exclusive_contextual_pct,
            s.exclusive_noncontextual_pct
        )?;
    }
    Ok(())
}
