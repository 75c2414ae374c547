//! Beam-search decoding over a pluggable next-token scorer.
//!
//! The search only sees a [`StepScorer`]: a candidate token list and a
//! way to turn (state, fed token) into next-token log-probabilities.
//! The model-backed scorer normalizes logits over the candidate set
//! only, which is what makes restricted decoding cheaper instead of just
//! masked. Tests drive the same search with hand-built scorers.

use crate::corpus::{SentencePair, BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::nmt::{decode_step, encode, nvs_scores, start_decoder, DecoderCaches};
use crate::nmt::{EncoderStates, ModelParams};
use crate::numerics::{dot, log_softmax, Real};
use crate::selection::{restrict_projection, select_align, select_nvs, RestrictedVocab};
use std::time::{Duration, Instant};

/// Next-token scoring interface for the beam search.
pub trait StepScorer {
    type State: Clone;

    /// Candidate token ids, one per scored row, ascending.
    fn candidates(&self) -> &[u32];

    /// State before any token has been fed.
    fn start_state(&self) -> Result<Self::State>;

    /// Feeds one token and returns log-probabilities for the next token,
    /// one per candidate row, normalized over the candidate set.
    fn step(&self, state: &mut Self::State, token: u32) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug)]
pub struct BeamConfig {
    pub beam: usize,
    /// Length-normalization exponent: hypotheses are ranked by
    /// `logprob / len^alpha`.
    pub alpha: f64,
    /// Hard cap on emitted tokens (the end marker counts).
    pub max_len: usize,
}

impl BeamConfig {
    /// Defaults: beam 5, plain average log-probability, and a length
    /// budget of twice the source length plus ten.
    pub fn for_source_len(src_len: usize) -> Self {
        Self {
            beam: 5,
            alpha: 1.0,
            max_len: 2 * src_len + 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.beam == 0 || self.max_len == 0 {
            return Err(Error::InvalidInput(
                "beam and length budget must be positive".into(),
            ));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidInput(format!(
                "length exponent {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// A finished decode: emitted tokens (end marker stripped), raw summed
/// log-probability, and the length-normalized score.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub logprob: f64,
    pub score: f64,
}

fn length_normalized(logprob: f64, emitted: usize, alpha: f64) -> f64 {
    logprob / (emitted as f64).powf(alpha)
}

/// Best `k` rows by log-probability, ties broken toward the lower token
/// id. Linear scan into a small sorted buffer; no full-vocabulary sort.
fn top_rows(lp: &[f64], ids: &[u32], k: usize) -> Vec<(usize, f64)> {
    let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
    for (row, &l) in lp.iter().enumerate() {
        let candidate = (row, l);
        if best.len() == k {
            let worst = *best.last().expect("non-empty at capacity");
            if !beats(candidate, worst, ids) {
                continue;
            }
        }
        let pos = best.partition_point(|&have| beats(have, candidate, ids));
        best.insert(pos, candidate);
        best.truncate(k);
    }
    best
}

fn beats(a: (usize, f64), b: (usize, f64), ids: &[u32]) -> bool {
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    ids[a.0] < ids[b.0]
}

struct Active<S> {
    state: S,
    /// Token to feed on the next expansion (starts as the beginning
    /// marker, then the latest emitted token).
    fed: u32,
    tokens: Vec<u32>,
    logprob: f64,
}

/// Runs the search and returns surviving hypotheses, best first. A
/// hypothesis finishes by emitting the end marker or by hitting the
/// length budget.
pub fn beam_search<S: StepScorer>(scorer: &S, cfg: &BeamConfig) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    let ids = scorer.candidates();
    if ids.is_empty() {
        return Err(Error::InvalidInput("no candidate tokens".into()));
    }
    let mut active = vec![Active {
        state: scorer.start_state()?,
        fed: BOS_ID,
        tokens: Vec::new(),
        logprob: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    while !active.is_empty() {
        // (parent index, candidate row, total logprob)
        let mut expansions: Vec<(usize, usize, f64)> = Vec::new();
        for (pi, hyp) in active.iter_mut().enumerate() {
            let lp = scorer.step(&mut hyp.state, hyp.fed)?;
            if lp.len() != ids.len() {
                return Err(Error::Shape(format!(
                    "{} scores for {} candidates",
                    lp.len(),
                    ids.len()
                )));
            }
            for (row, l) in top_rows(&lp, ids, cfg.beam) {
                expansions.push((pi, row, hyp.logprob + l));
            }
        }
        expansions.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .expect("finite log-probabilities")
                .then_with(|| ids[a.1].cmp(&ids[b.1]))
                .then_with(|| a.0.cmp(&b.0))
        });
        expansions.truncate(cfg.beam);

        let mut next_active = Vec::with_capacity(cfg.beam);
        for (pi, row, logprob) in expansions {
            let parent = &active[pi];
            let token = ids[row];
            let mut tokens = parent.tokens.clone();
            tokens.push(token);
            let emitted = tokens.len();
            if token == EOS_ID {
                tokens.pop(); // end marker scored but not reported
                finished.push(Hypothesis {
                    tokens,
                    logprob,
                    score: length_normalized(logprob, emitted, cfg.alpha),
                });
            } else if emitted >= cfg.max_len {
                finished.push(Hypothesis {
                    tokens,
                    logprob,
                    score: length_normalized(logprob, emitted, cfg.alpha),
                });
            } else {
                next_active.push(Active {
                    state: parent.state.clone(),
                    fed: token,
                    tokens,
                    logprob,
                });
            }
        }
        active = next_active;
    }

    finished.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    finished.truncate(cfg.beam);
    if finished.is_empty() {
        return Err(Error::Numeric("beam search finished no hypothesis".into()));
    }
    Ok(finished)
}

// ── Model-backed scorer ─────────────────────────────────────────────────

enum ProjectionKind<'a, T: Real> {
    Full {
        ids: Vec<u32>,
        params: &'a ModelParams<T>,
    },
    Restricted(RestrictedVocab<T>),
}

/// Scores decoder steps of a trained model, optionally in a restricted
/// output space.
pub struct ModelScorer<'a, T: Real> {
    params: &'a ModelParams<T>,
    enc: &'a EncoderStates<T>,
    projection: ProjectionKind<'a, T>,
}

impl<'a, T: Real> ModelScorer<'a, T> {
    /// Unrestricted: scores every target vocabulary entry directly from
    /// the full output projection.
    pub fn full(params: &'a ModelParams<T>, enc: &'a EncoderStates<T>) -> Self {
        let ids = (0..params.cfg.v_tgt as u32).collect();
        Self {
            params,
            enc,
            projection: ProjectionKind::Full { ids, params },
        }
    }

    /// Restricted to one sentence's selected vocabulary; the projection
    /// rows were gathered once by [`restrict_projection`].
    pub fn restricted(
        params: &'a ModelParams<T>,
        enc: &'a EncoderStates<T>,
        restricted: RestrictedVocab<T>,
    ) -> Self {
        Self {
            params,
            enc,
            projection: ProjectionKind::Restricted(restricted),
        }
    }

    /// Candidate count, the restricted vocabulary size.
    pub fn width(&self) -> usize {
        self.candidates().len()
    }
}

impl<T: Real> StepScorer for ModelScorer<'_, T> {
    type State = DecoderCaches<T>;

    fn candidates(&self) -> &[u32] {
        match &self.projection {
            ProjectionKind::Full { ids, .. } => ids,
            ProjectionKind::Restricted(r) => &r.ids,
        }
    }

    fn start_state(&self) -> Result<Self::State> {
        start_decoder(self.params, self.enc)
    }

    fn step(&self, state: &mut Self::State, token: u32) -> Result<Vec<f64>> {
        let hidden = decode_step(self.params, state, token)?;
        let logits: Vec<T> = match &self.projection {
            ProjectionKind::Full { params, .. } => crate::nmt::model::full_logits(params, &hidden),
            ProjectionKind::Restricted(r) => (0..r.ids.len())
                .map(|row| dot(r.w.row(row), &hidden) + r.b[row])
                .collect(),
        };
        Ok(log_softmax(&logits)?
            .into_iter()
            .map(|l| l.to_f64())
            .collect())
    }
}

// ── Sentence pipeline ───────────────────────────────────────────────────

/// How to pick the per-sentence vocabulary before decoding.
pub enum SelectorSpec<'a> {
    /// No selection: decode over the whole vocabulary.
    Full,
    /// Threshold the vocabulary-prediction head at `lambda`.
    Nvs { lambda: f64 },
    /// Union of per-source-token lexicon shortlists of depth `k`.
    Align {
        lexicon: &'a crate::aligner::TranslationLexicon,
        k: usize,
    },
}

/// Wall-clock cost of each stage of one sentence.
#[derive(Clone, Copy, Debug, Default)]
pub struct StageTiming {
    pub encode: Duration,
    pub select: Duration,
    pub decode: Duration,
}

impl StageTiming {
    pub fn total(&self) -> Duration {
        self.encode + self.select + self.decode
    }
}

/// One translated sentence.
#[derive(Clone, Debug)]
pub struct TranslationOutput {
    pub tokens: Vec<u32>,
    pub score: f64,
    /// Size of the vocabulary the decoder actually scored.
    pub vocab_size: usize,
    pub timing: StageTiming,
}

/// Encode, select, restrict, decode: the full path for one sentence.
pub fn translate_sentence<T: Real>(
    params: &ModelParams<T>,
    src: &[u32],
    selector: &SelectorSpec,
    beam: Option<BeamConfig>,
) -> Result<TranslationOutput> {
    let beam_cfg = beam.unwrap_or_else(|| BeamConfig::for_source_len(src.len()));
    let t0 = Instant::now();
    let enc = encode(params, src)?;
    let encode_time = t0.elapsed();

    let t1 = Instant::now();
    let bow = match selector {
        SelectorSpec::Full => None,
        SelectorSpec::Nvs { lambda } => {
            let z = nvs_scores(params, &enc)?;
            Some(select_nvs(&z, *lambda)?)
        }
        SelectorSpec::Align { lexicon, k } => {
            Some(select_align(lexicon, src, *k, params.cfg.v_tgt)?)
        }
    };
    let restricted = bow.map(|b| restrict_projection(params, &b)).transpose()?;
    let select_time = t1.elapsed();

    let t2 = Instant::now();
    let scorer = match restricted {
        None => ModelScorer::full(params, &enc),
        Some(r) => ModelScorer::restricted(params, &enc, r),
    };
    let vocab_size = scorer.width();
    let best = beam_search(&scorer, &beam_cfg)?.swap_remove(0);
    let decode_time = t2.elapsed();

    Ok(TranslationOutput {
        tokens: best.tokens,
        score: best.score,
        vocab_size,
        timing: StageTiming {
            encode: encode_time,
            select: select_time,
            decode: decode_time,
        },
    })
}

/// Convenience for scoring corpora: translate each source of `pairs`.
pub fn translate_corpus<T: Real>(
    params: &ModelParams<T>,
    sources: &[Vec<u32>],
    selector: &SelectorSpec,
) -> Result<Vec<TranslationOutput>> {
    sources
        .iter()
        .map(|src| translate_sentence(params, src, selector, None))
        .collect()
}

/// Builds the decoding-ready form of an evaluation pair list.
pub fn sources_of(pairs: &[SentencePair]) -> Vec<Vec<u32>> {
    pairs.iter().map(|p| p.source.clone()).collect()
}
