//! Per-sentence target-vocabulary selection.
//!
//! Both selectors produce a [`BagOfWords`]: the set of target vocabulary
//! ids decoding is allowed to emit for one sentence. The four reserved
//! ids are always members, so the decoder can always finish a
//! hypothesis. Selection happens once per sentence; every decoder step
//! reuses the same set.

use crate::aligner::TranslationLexicon;
use crate::corpus::{Vocabulary, EOS_ID, PAD_ID};
use crate::error::{Error, Result};
use crate::nmt::ModelParams;
use crate::numerics::{DenseMatrix, Real};

/// Set of permitted target ids for one sentence, stored both as a
/// membership mask and as a sorted id list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BagOfWords {
    bits: Vec<bool>,
    ids: Vec<u32>,
}

impl BagOfWords {
    /// Builds a set over a vocabulary of `v_tgt` entries; the reserved
    /// ids are added whether or not they are given.
    pub fn from_ids(ids: impl IntoIterator<Item = u32>, v_tgt: usize) -> Result<Self> {
        if v_tgt <= EOS_ID as usize {
            return Err(Error::InvalidInput(format!(
                "vocabulary of {v_tgt} cannot hold the reserved ids"
            )));
        }
        let mut bits = vec![false; v_tgt];
        for special in PAD_ID..=EOS_ID {
            bits[special as usize] = true;
        }
        for id in ids {
            let slot = bits.get_mut(id as usize).ok_or_else(|| {
                Error::InvalidInput(format!("id {id} outside vocabulary of {v_tgt}"))
            })?;
            *slot = true;
        }
        Ok(Self::from_bits(bits))
    }

    fn from_bits(bits: Vec<bool>) -> Self {
        let ids = bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| if b { Some(i as u32) } else { None })
            .collect();
        Self { bits, ids }
    }

    /// The whole vocabulary.
    pub fn full(v_tgt: usize) -> Result<Self> {
        if v_tgt <= EOS_ID as usize {
            return Err(Error::InvalidInput(format!(
                "vocabulary of {v_tgt} cannot hold the reserved ids"
            )));
        }
        Ok(Self::from_bits(vec![true; v_tgt]))
    }

    /// Number of selected ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the reserved ids are always present
    }

    pub fn vocab_size(&self) -> usize {
        self.bits.len()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.bits.get(id as usize).copied().unwrap_or(false)
    }

    /// Selected ids, ascending.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn is_full(&self) -> bool {
        self.ids.len() == self.bits.len()
    }

    /// Set union, used to merge per-word selections.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.vocab_size() != other.vocab_size() {
            return Err(Error::Shape(format!(
                "union of sets over {} and {} entries",
                self.vocab_size(),
                other.vocab_size()
            )));
        }
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a || b)
            .collect();
        Ok(Self::from_bits(bits))
    }
}

/// Thresholds per-entry presence probabilities: an id is selected when
/// its probability strictly exceeds `lambda`. Zero keeps everything, so
/// unrestricted decoding is the `lambda = 0` special case.
pub fn select_nvs<T: Real>(z: &[T], lambda: f64) -> Result<BagOfWords> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "threshold {lambda} outside [0, 1)"
        )));
    }
    if z.len() <= EOS_ID as usize {
        return Err(Error::InvalidInput(format!(
            "{} scores cannot cover the reserved ids",
            z.len()
        )));
    }
    let mut bits: Vec<bool> = z.iter().map(|&p| p.to_f64() > lambda).collect();
    for special in PAD_ID..=EOS_ID {
        bits[special as usize] = true;
    }
    Ok(BagOfWords::from_bits(bits))
}

/// Union of the `k` best lexicon targets of every source token. Source
/// ids without lexicon entries contribute nothing (logged at debug
/// level, since unknown sources are expected on out-of-domain input).
pub fn select_align(
    lexicon: &TranslationLexicon,
    src_ids: &[u32],
    k: usize,
    v_tgt: usize,
) -> Result<BagOfWords> {
    if k == 0 {
        return Err(Error::InvalidInput(
            "shortlist depth must be positive".into(),
        ));
    }
    if k > lexicon.k_max() {
        return Err(Error::InvalidInput(format!(
            "asked for {k} targets per source but the lexicon stores {}",
            lexicon.k_max()
        )));
    }
    let mut ids = Vec::new();
    for &e in src_ids {
        let entries = lexicon.top_k(e, k);
        if entries.is_empty() {
            log::debug!("source id {e} has no lexicon entries");
        }
        ids.extend(entries.iter().map(|&(f, _)| f));
    }
    BagOfWords::from_ids(ids, v_tgt)
}

/// Output projection rows gathered for one selected set: row `r` of `w`
/// scores vocabulary id `ids()[r]`.
#[derive(Clone, Debug)]
pub struct RestrictedVocab<T: Real> {
    pub w: DenseMatrix<T>,
    pub b: Vec<T>,
    pub ids: Vec<u32>,
}

/// Gathers the output projection once per sentence; decoding then works
/// in the restricted space.
pub fn restrict_projection<T: Real>(
    params: &ModelParams<T>,
    bow: &BagOfWords,
) -> Result<RestrictedVocab<T>> {
    if bow.vocab_size() != params.cfg.v_tgt {
        return Err(Error::Shape(format!(
            "selection over {} entries for a vocabulary of {}",
            bow.vocab_size(),
            params.cfg.v_tgt
        )));
    }
    let d = params.cfg.d_model;
    let ids = bow.ids().to_vec();
    let mut w = DenseMatrix::zeros(ids.len(), d);
    let mut b = Vec::with_capacity(ids.len());
    for (r, &id) in ids.iter().enumerate() {
        w.row_mut(r).copy_from_slice(params.w_out.row(id as usize));
        b.push(params.b_out[(id as usize, 0)]);
    }
    Ok(RestrictedVocab { w, b, ids })
}

/// One line of the selected-vocabulary dump: the member tokens (reserved
/// ids omitted), tab separated, sorted lexicographically.
pub fn bow_token_line(bow: &BagOfWords, vocab: &Vocabulary) -> Result<String> {
    if bow.vocab_size() != vocab.len() {
        return Err(Error::Shape(format!(
            "selection over {} entries for a vocabulary of {}",
            bow.vocab_size(),
            vocab.len()
        )));
    }
    let mut tokens = Vec::with_capacity(bow.len());
    for &id in bow.ids() {
        if id > EOS_ID {
            tokens.push(vocab.token(id)?.to_string());
        }
    }
    tokens.sort();
    Ok(tokens.join("\t"))
}
