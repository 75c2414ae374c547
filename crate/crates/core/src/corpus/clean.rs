//! Heuristic filters for noisy parallel sentence pairs.

/// Why a pair was dropped. Checks run in the order the variants are
/// declared; the first violated rule is reported.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RejectRule {
    /// Either side longer than the token limit (or empty).
    Length,
    /// Token-count ratio above the limit in either direction.
    Ratio,
    /// Too much vocabulary shared between source and target, which
    /// usually means untranslated copy-through.
    Overlap,
}

impl std::fmt::Display for RejectRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectRule::Length => "length",
            RejectRule::Ratio => "ratio",
            RejectRule::Overlap => "overlap",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CleanConfig {
    /// Maximum subword tokens per side.
    pub max_len: usize,
    /// Maximum length ratio, applied in both directions.
    pub max_ratio: f64,
    /// Maximum `|unique(src) ∩ unique(tgt)| / min(|unique(src)|, |unique(tgt)|)`.
    pub max_overlap: f64,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            max_len: 100,
            max_ratio: 1.5,
            max_overlap: 0.70,
        }
    }
}

/// Checks one pair of subword token sequences. `None` means keep.
pub fn clean_pair<S: AsRef<str>>(src: &[S], tgt: &[S], cfg: &CleanConfig) -> Option<RejectRule> {
    if src.is_empty() || tgt.is_empty() || src.len() > cfg.max_len || tgt.len() > cfg.max_len {
        return Some(RejectRule::Length);
    }
    let (longer, shorter) = if src.len() >= tgt.len() {
        (src.len(), tgt.len())
    } else {
        (tgt.len(), src.len())
    };
    if longer as f64 / shorter as f64 > cfg.max_ratio {
        return Some(RejectRule::Ratio);
    }
    let src_set: std::collections::HashSet<&str> = src.iter().map(AsRef::as_ref).collect();
    let tgt_set: std::collections::HashSet<&str> = tgt.iter().map(AsRef::as_ref).collect();
    let shared = src_set.intersection(&tgt_set).count();
    let denom = src_set.len().min(tgt_set.len());
    if shared as f64 / denom as f64 > cfg.max_overlap {
        return Some(RejectRule::Overlap);
    }
    None
}

/// Filters a corpus, returning kept indices and `(index, rule)` for every
/// rejected pair so callers can log each decision.
pub fn clean_pairs<S: AsRef<str>>(
    pairs: &[(Vec<S>, Vec<S>)],
    cfg: &CleanConfig,
) -> (Vec<usize>, Vec<(usize, RejectRule)>) {
    let mut kept = Vec::with_capacity(pairs.len());
    let mut rejected = Vec::new();
    for (i, (src, tgt)) in pairs.iter().enumerate() {
        match clean_pair(src, tgt, cfg) {
            None => kept.push(i),
            Some(rule) => rejected.push((i, rule)),
        }
    }
    (kept, rejected)
}
