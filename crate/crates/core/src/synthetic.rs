//! Deterministic synthetic translation task: reverse the sentence and
//! substitute every word through a fixed dictionary. Four controlled
//! phenomena are layered on top so selection quality is measurable:
//!
//! * two marker words steer the sense of a handful of ambiguous source
//!   words, so correct selection needs sentence context;
//! * a fraction of training sentences carries no marker, and ambiguous
//!   senses there are random, so the model meets genuine uncertainty;
//! * a fixed list of source bigrams translates to single fused tokens
//!   ("idioms"), and some ambiguous words have a collocation partner
//!   that forces the second sense; both constructions are kept out of
//!   the base corpus and come only from the adaptation splits, with
//!   span annotations;
//! * every other word maps one-to-one, so a perfect model exists.

use crate::bench::EvalItem;
use crate::corpus::{SentencePair, Vocabulary, END_OF_WORD, EOS_ID};
use crate::error::{Error, Result};
use crate::rng::stage_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sizes and seed for one generated task instance.
#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    /// One-to-one translated word types.
    pub base_words: usize,
    /// Source words whose translation depends on the sentence marker.
    pub ambiguous_words: usize,
    /// Source bigrams fused to a single target token.
    pub idioms: usize,
    /// Ambiguous words with a collocation partner forcing sense two.
    pub sense_idioms: usize,
    /// Fraction of training sentences generated without a marker.
    pub no_marker_rate: f64,
    /// Content words per sentence, marker excluded.
    pub min_words: usize,
    pub max_words: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub adapt_pairs: usize,
    pub idiom_eval_pairs: usize,
    pub ambiguous_eval_pairs: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            base_words: 40,
            ambiguous_words: 6,
            idioms: 10,
            sense_idioms: 6,
            no_marker_rate: 0.05,
            min_words: 4,
            max_words: 9,
            train_pairs: 20_000,
            test_pairs: 500,
            adapt_pairs: 300,
            idiom_eval_pairs: 200,
            ambiguous_eval_pairs: 200,
            seed: 17,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.base_words < 2 * self.idioms.max(1) + self.sense_idioms {
            return Err(Error::InvalidInput(
                "idiom bigrams and collocation partners draw on distinct base words; \
                 need base_words >= 2*idioms + sense_idioms"
                    .into(),
            ));
        }
        if self.ambiguous_words == 0 || self.base_words == 0 {
            return Err(Error::InvalidInput(
                "need at least one word of each kind".into(),
            ));
        }
        if self.sense_idioms > self.ambiguous_words {
            return Err(Error::InvalidInput(
                "every collocation needs its own ambiguous word; \
                 need sense_idioms <= ambiguous_words"
                    .into(),
            ));
        }
        if !(0.0..1.0).contains(&self.no_marker_rate) {
            return Err(Error::InvalidInput(format!(
                "no_marker_rate {} outside [0, 1)",
                self.no_marker_rate
            )));
        }
        if self.min_words < 2 || self.max_words < self.min_words {
            return Err(Error::InvalidInput(format!(
                "bad sentence length range {}..{}",
                self.min_words, self.max_words
            )));
        }
        if (self.adapt_pairs > 0 || self.idiom_eval_pairs > 0)
            && self.idioms == 0
            && self.sense_idioms == 0
        {
            return Err(Error::InvalidInput(
                "adaptation splits need at least one idiom construction".into(),
            ));
        }
        Ok(())
    }
}

/// Id tables of the generated language, parallel by index.
#[derive(Clone, Debug)]
pub struct TaskWords {
    pub markers: [u32; 2],
    pub marker_targets: [u32; 2],
    pub base_source: Vec<u32>,
    pub base_target: Vec<u32>,
    pub ambiguous_source: Vec<u32>,
    /// Per ambiguous word: target under marker 0, target under marker 1.
    pub sense_targets: Vec<[u32; 2]>,
    /// Source id pairs that fuse when adjacent in this order.
    pub idiom_pairs: Vec<(u32, u32)>,
    pub idiom_targets: Vec<u32>,
    /// Per leading ambiguous word: the base word that, directly after
    /// it, forces the second sense regardless of any marker.
    pub sense_partners: Vec<u32>,
}

impl TaskWords {
    /// Target image of one source word under the given marker.
    pub fn image(&self, word: u32, marker: usize) -> Option<u32> {
        if let Some(m) = self.markers.iter().position(|&w| w == word) {
            return Some(self.marker_targets[m]);
        }
        if let Some(i) = self.base_source.iter().position(|&w| w == word) {
            return Some(self.base_target[i]);
        }
        if let Some(j) = self.ambiguous_source.iter().position(|&w| w == word) {
            return Some(self.sense_targets[j][marker]);
        }
        None
    }
}

/// One generated task: shared vocabulary, training and evaluation
/// splits, and the ground-truth word tables.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub vocab: Vocabulary,
    pub words: TaskWords,
    pub train: Vec<SentencePair>,
    pub test: Vec<EvalItem>,
    /// Idiom-bearing pairs for adaptation training.
    pub adapt_train: Vec<SentencePair>,
    /// Held-out idiom-bearing items with span annotations.
    pub idiom_eval: Vec<EvalItem>,
    /// Items annotated on one ambiguous word occurrence.
    pub ambiguous_eval: Vec<EvalItem>,
}

impl SyntheticTask {
    /// Shared source/target vocabulary size.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

fn build_words(cfg: &SyntheticConfig) -> Result<(Vocabulary, TaskWords)> {
    let mut tokens = Vec::new();
    let push = |tokens: &mut Vec<String>, s: String| -> usize {
        tokens.push(s);
        tokens.len() - 1
    };
    let m0 = push(&mut tokens, format!("m0{END_OF_WORD}"));
    let m1 = push(&mut tokens, format!("m1{END_OF_WORD}"));
    let tm0 = push(&mut tokens, format!("tm0{END_OF_WORD}"));
    let tm1 = push(&mut tokens, format!("tm1{END_OF_WORD}"));
    let base_source: Vec<usize> = (0..cfg.base_words)
        .map(|i| push(&mut tokens, format!("sw{i:02}{END_OF_WORD}")))
        .collect();
    let base_target: Vec<usize> = (0..cfg.base_words)
        .map(|i| push(&mut tokens, format!("tw{i:02}{END_OF_WORD}")))
        .collect();
    let ambiguous_source: Vec<usize> = (0..cfg.ambiguous_words)
        .map(|j| push(&mut tokens, format!("ax{j}{END_OF_WORD}")))
        .collect();
    let sense_targets: Vec<[usize; 2]> = (0..cfg.ambiguous_words)
        .map(|j| {
            [
                push(&mut tokens, format!("ay{j}a{END_OF_WORD}")),
                push(&mut tokens, format!("ay{j}b{END_OF_WORD}")),
            ]
        })
        .collect();
    let idiom_targets: Vec<usize> = (0..cfg.idioms)
        .map(|t| push(&mut tokens, format!("ti{t:02}{END_OF_WORD}")))
        .collect();

    let vocab = Vocabulary::from_ordered_tokens(tokens)?;
    // Ids shift by the four reserved entries the vocabulary prepends.
    let id = |slot: usize| (slot + 4) as u32;
    let words = TaskWords {
        markers: [id(m0), id(m1)],
        marker_targets: [id(tm0), id(tm1)],
        base_source: base_source.iter().map(|&s| id(s)).collect(),
        base_target: base_target.iter().map(|&s| id(s)).collect(),
        ambiguous_source: ambiguous_source.iter().map(|&s| id(s)).collect(),
        sense_targets: sense_targets.iter().map(|&[a, b]| [id(a), id(b)]).collect(),
        idiom_pairs: (0..cfg.idioms)
            .map(|t| (id(base_source[2 * t]), id(base_source[2 * t + 1])))
            .collect(),
        idiom_targets: idiom_targets.iter().map(|&s| id(s)).collect(),
        // Partners come after the words consumed by the fused bigrams.
        sense_partners: (0..cfg.sense_idioms)
            .map(|j| id(base_source[2 * cfg.idioms + j]))
            .collect(),
    };
    Ok((vocab, words))
}

/// Positions `p` where `source[p], source[p+1]` is a fused idiom bigram.
fn idiom_adjacencies(source: &[u32], words: &TaskWords) -> Vec<(usize, usize)> {
    let mut found = Vec::new();
    for p in 0..source.len().saturating_sub(1) {
        if let Some(t) = words
            .idiom_pairs
            .iter()
            .position(|&(x, y)| x == source[p] && y == source[p + 1])
        {
            found.push((p, t));
        }
    }
    found
}

/// Positions `p` where `source[p]` is an ambiguous word followed by its
/// collocation partner.
fn collocation_adjacencies(source: &[u32], words: &TaskWords) -> Vec<(usize, usize)> {
    let mut found = Vec::new();
    for p in 0..source.len().saturating_sub(1) {
        if let Some(j) = words.ambiguous_source.iter().position(|&x| x == source[p]) {
            if words.sense_partners.get(j) == Some(&source[p + 1]) {
                found.push((p, j));
            }
        }
    }
    found
}

/// Maps a source sentence to its target: left-to-right images with
/// adjacent idiom bigrams fused, then the whole thing reversed, then the
/// end marker. An ambiguous word followed by its collocation partner
/// takes the second sense; any other ambiguous occurrence asks `pick`
/// with its position and word index. Returns the target and the
/// reversed position of each source token's group.
fn translate(
    source: &[u32],
    words: &TaskWords,
    pick: &mut dyn FnMut(usize, usize) -> usize,
) -> (Vec<u32>, Vec<usize>) {
    let mut groups = Vec::with_capacity(source.len());
    let mut group_of = vec![0usize; source.len()];
    let mut i = 0;
    while i < source.len() {
        let idiom = if i + 1 < source.len() {
            words
                .idiom_pairs
                .iter()
                .position(|&(x, y)| x == source[i] && y == source[i + 1])
        } else {
            None
        };
        match idiom {
            Some(t) => {
                groups.push(words.idiom_targets[t]);
                group_of[i] = groups.len() - 1;
                group_of[i + 1] = groups.len() - 1;
                i += 2;
            }
            None => {
                let w = source[i];
                let image = match words.ambiguous_source.iter().position(|&x| x == w) {
                    Some(j) => {
                        let forced = i + 1 < source.len()
                            && words.sense_partners.get(j) == Some(&source[i + 1]);
                        let sense = if forced { 1 } else { pick(i, j) };
                        words.sense_targets[j][sense]
                    }
                    None => words.image(w, 0).expect("generated words only"),
                };
                groups.push(image);
                group_of[i] = groups.len() - 1;
                i += 1;
            }
        }
    }
    let n = groups.len();
    let mut target: Vec<u32> = groups.into_iter().rev().collect();
    target.push(EOS_ID);
    let reversed_pos = group_of.into_iter().map(|g| n - 1 - g).collect();
    (target, reversed_pos)
}

fn sample_content(rng: &mut ChaCha8Rng, words: &TaskWords, cfg: &SyntheticConfig) -> Vec<u32> {
    let pool_len = words.base_source.len() + words.ambiguous_source.len();
    let len = rng.gen_range(cfg.min_words..=cfg.max_words);
    (0..len)
        .map(|_| {
            let pick = rng.gen_range(0..pool_len);
            if pick < words.base_source.len() {
                words.base_source[pick]
            } else {
                words.ambiguous_source[pick - words.base_source.len()]
            }
        })
        .collect()
}

fn insert_marker(content: &[u32], marker_id: u32, pos: usize) -> Vec<u32> {
    let mut source = Vec::with_capacity(content.len() + 1);
    source.extend_from_slice(&content[..pos]);
    source.push(marker_id);
    source.extend_from_slice(&content[pos..]);
    source
}

/// A sentence of the base distribution, free of idiom bigrams and
/// collocations. With probability `unmarked_rate` it carries no marker
/// and every ambiguous sense is drawn at random.
fn base_sentence(
    rng: &mut ChaCha8Rng,
    words: &TaskWords,
    cfg: &SyntheticConfig,
    unmarked_rate: f64,
) -> (Vec<u32>, Vec<u32>) {
    loop {
        let content = sample_content(rng, words, cfg);
        let (source, marker) = if rng.gen_bool(unmarked_rate) {
            (content, None)
        } else {
            let m = rng.gen_range(0..2usize);
            let pos = rng.gen_range(0..=content.len());
            (insert_marker(&content, words.markers[m], pos), Some(m))
        };
        if !idiom_adjacencies(&source, words).is_empty()
            || !collocation_adjacencies(&source, words).is_empty()
        {
            continue;
        }
        let (target, _) = match marker {
            Some(m) => translate(&source, words, &mut |_, _| m),
            None => translate(&source, words, &mut |_, _| rng.gen_range(0..2)),
        };
        return (source, target);
    }
}

/// A marked sentence containing exactly one fused idiom bigram. Returns
/// the pair and the half-open source and reference spans of the idiom.
fn idiom_sentence(
    rng: &mut ChaCha8Rng,
    words: &TaskWords,
    cfg: &SyntheticConfig,
) -> (
    Vec<u32>,
    Vec<u32>,
    std::ops::Range<usize>,
    std::ops::Range<usize>,
) {
    loop {
        let mut content = sample_content(rng, words, cfg);
        let t = rng.gen_range(0..words.idiom_pairs.len());
        let j = rng.gen_range(0..content.len() - 1);
        let (x, y) = words.idiom_pairs[t];
        content[j] = x;
        content[j + 1] = y;
        let marker = rng.gen_range(0..2usize);
        // Any insertion point except the middle of the bigram.
        let pos = loop {
            let p = rng.gen_range(0..=content.len());
            if p != j + 1 {
                break p;
            }
        };
        let source = insert_marker(&content, words.markers[marker], pos);
        let i = j + usize::from(pos <= j);
        let adj = idiom_adjacencies(&source, words);
        if adj != vec![(i, t)] || !collocation_adjacencies(&source, words).is_empty() {
            continue; // an accidental second construction appeared; resample
        }
        let (target, reversed_pos) = translate(&source, words, &mut |_, _| marker);
        let r = reversed_pos[i];
        debug_assert_eq!(target[r], words.idiom_targets[t]);
        return (source, target, i..i + 2, r..r + 1);
    }
}

/// An unmarked sentence containing exactly one collocation: an ambiguous
/// word directly followed by its partner, forcing the second sense.
/// Other ambiguous occurrences get random senses. Returns the pair and
/// the spans of the bigram and its sense token.
fn collocation_sentence(
    rng: &mut ChaCha8Rng,
    words: &TaskWords,
    cfg: &SyntheticConfig,
) -> (
    Vec<u32>,
    Vec<u32>,
    std::ops::Range<usize>,
    std::ops::Range<usize>,
) {
    loop {
        let mut content = sample_content(rng, words, cfg);
        let j = rng.gen_range(0..words.sense_partners.len());
        let p = rng.gen_range(0..content.len() - 1);
        content[p] = words.ambiguous_source[j];
        content[p + 1] = words.sense_partners[j];
        let source = content;
        if !idiom_adjacencies(&source, words).is_empty()
            || collocation_adjacencies(&source, words) != vec![(p, j)]
        {
            continue;
        }
        let (target, reversed_pos) = translate(&source, words, &mut |_, _| rng.gen_range(0..2));
        let r = reversed_pos[p];
        debug_assert_eq!(target[r], words.sense_targets[j][1]);
        return (source, target, p..p + 2, r..r + 1);
    }
}

/// A marked base-distribution sentence with one forced ambiguous word,
/// which is the annotated span on both sides.
fn ambiguous_sentence(
    rng: &mut ChaCha8Rng,
    words: &TaskWords,
    cfg: &SyntheticConfig,
) -> (
    Vec<u32>,
    Vec<u32>,
    std::ops::Range<usize>,
    std::ops::Range<usize>,
) {
    loop {
        let mut content = sample_content(rng, words, cfg);
        let j = rng.gen_range(0..content.len());
        let word = words.ambiguous_source[rng.gen_range(0..words.ambiguous_source.len())];
        content[j] = word;
        let marker = rng.gen_range(0..2usize);
        let pos = rng.gen_range(0..=content.len());
        let source = insert_marker(&content, words.markers[marker], pos);
        if !idiom_adjacencies(&source, words).is_empty()
            || !collocation_adjacencies(&source, words).is_empty()
        {
            continue;
        }
        let i = j + usize::from(pos <= j);
        let (target, reversed_pos) = translate(&source, words, &mut |_, _| marker);
        let r = reversed_pos[i];
        debug_assert_eq!(
            target[r],
            words.sense_targets[words
                .ambiguous_source
                .iter()
                .position(|&w| w == word)
                .unwrap()][marker]
        );
        return (source, target, i..i + 1, r..r + 1);
    }
}

fn strip_eos(mut target: Vec<u32>) -> Vec<u32> {
    debug_assert_eq!(target.last(), Some(&EOS_ID));
    target.pop();
    target
}

/// Generates the full task deterministically from the config seed.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticTask> {
    cfg.validate()?;
    let (vocab, words) = build_words(cfg)?;
    // Adaptation splits alternate between the two constructions.
    let fused_at = |i: usize| match (cfg.idioms > 0, cfg.sense_idioms > 0) {
        (true, true) => i % 2 == 0,
        (only_fused, _) => only_fused,
    };

    let mut rng = stage_rng(cfg.seed, "synthetic-train");
    let train: Vec<SentencePair> = (0..cfg.train_pairs)
        .map(|_| {
            let (s, t) = base_sentence(&mut rng, &words, cfg, cfg.no_marker_rate);
            SentencePair::new(s, t)
        })
        .collect();

    let mut rng = stage_rng(cfg.seed, "synthetic-test");
    let test: Result<Vec<EvalItem>> = (0..cfg.test_pairs)
        .map(|_| {
            let (s, t) = base_sentence(&mut rng, &words, cfg, 0.0);
            EvalItem::new(s, strip_eos(t), None)
        })
        .collect();

    let mut rng = stage_rng(cfg.seed, "synthetic-adapt");
    let adapt_train: Vec<SentencePair> = (0..cfg.adapt_pairs)
        .map(|i| {
            let (s, t, _, _) = if fused_at(i) {
                idiom_sentence(&mut rng, &words, cfg)
            } else {
                collocation_sentence(&mut rng, &words, cfg)
            };
            SentencePair::new(s, t)
        })
        .collect();

    let mut rng = stage_rng(cfg.seed, "synthetic-idiom-eval");
    let idiom_eval: Result<Vec<EvalItem>> = (0..cfg.idiom_eval_pairs)
        .map(|i| {
            let (s, t, src_span, ref_span) = if fused_at(i) {
                idiom_sentence(&mut rng, &words, cfg)
            } else {
                collocation_sentence(&mut rng, &words, cfg)
            };
            EvalItem::new(s, strip_eos(t), Some((src_span, ref_span)))
        })
        .collect();

    let mut rng = stage_rng(cfg.seed, "synthetic-ambiguous");
    let ambiguous_eval: Result<Vec<EvalItem>> = (0..cfg.ambiguous_eval_pairs)
        .map(|_| {
            let (s, t, src_span, ref_span) = ambiguous_sentence(&mut rng, &words, cfg);
            EvalItem::new(s, strip_eos(t), Some((src_span, ref_span)))
        })
        .collect();

    Ok(SyntheticTask {
        vocab,
        words,
        train,
        test: test?,
        adapt_train,
        idiom_eval: idiom_eval?,
        ambiguous_eval: ambiguous_eval?,
    })
}

/// Small monotone-alignment corpus over a known one-to-one dictionary:
/// `n_words` source types map to `n_words` target types through a fixed
/// permutation, sentences keep source order on the target side. Returns
/// the pairs, the shared vocabulary size, and the dictionary.
pub fn bijective_corpus(
    n_words: usize,
    n_pairs: usize,
    seed: u64,
) -> (Vec<SentencePair>, usize, Vec<(u32, u32)>) {
    let src = |i: usize| (4 + i) as u32;
    let tgt = |i: usize| (4 + n_words + i) as u32;
    // Multiplier coprime with the word count keeps the map a bijection.
    let mult = (3..).find(|m| gcd(*m, n_words) == 1).unwrap_or(1);
    let image = |i: usize| tgt((i * mult + 3) % n_words);
    let dictionary: Vec<(u32, u32)> = (0..n_words).map(|i| (src(i), image(i))).collect();

    let mut rng = stage_rng(seed, "bijective-corpus");
    let pairs = (0..n_pairs)
        .map(|_| {
            let len = rng.gen_range(3..=6);
            let idx: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n_words)).collect();
            let source: Vec<u32> = idx.iter().map(|&i| src(i)).collect();
            let mut target: Vec<u32> = idx.iter().map(|&i| image(i)).collect();
            target.push(EOS_ID);
            SentencePair::new(source, target)
        })
        .collect();
    (pairs, 4 + 2 * n_words, dictionary)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            train_pairs: 60,
            test_pairs: 20,
            adapt_pairs: 16,
            idiom_eval_pairs: 16,
            ambiguous_eval_pairs: 15,
            seed: 9,
            ..SyntheticConfig::default()
        }
    }

    fn marker_of(source: &[u32], words: &TaskWords) -> Option<usize> {
        words.markers.iter().position(|m| source.contains(m))
    }

    #[test]
    fn generation_is_deterministic_and_sized() {
        let cfg = small_cfg();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.adapt_train, b.adapt_train);
        assert_eq!(a.idiom_eval, b.idiom_eval);
        assert_eq!(a.ambiguous_eval, b.ambiguous_eval);
        assert_eq!(a.train.len(), 60);
        assert_eq!(a.test.len(), 20);
        // 4 reserved + 2 markers + 2 marker images + 40 base pairs
        // + 6 ambiguous + 12 senses + 10 idiom targets.
        assert_eq!(a.vocab_size(), 4 + 2 + 2 + 80 + 6 + 12 + 10);
        let c = generate(&SyntheticConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.train, c.train, "seed must matter");
    }

    #[test]
    fn every_token_is_a_marked_whole_word() {
        let task = generate(&small_cfg()).unwrap();
        for id in 4..task.vocab_size() as u32 {
            assert!(task.vocab.token(id).unwrap().ends_with(END_OF_WORD));
        }
    }

    #[test]
    fn targets_are_reversed_images_of_the_source() {
        let task = generate(&small_cfg()).unwrap();
        for pair in &task.train {
            assert_eq!(*pair.target.last().unwrap(), EOS_ID);
            let body = &pair.target[..pair.target.len() - 1];
            assert_eq!(body.len(), pair.source.len());
            let marker = marker_of(&pair.source, &task.words);
            for (&w, &t) in pair.source.iter().zip(body.iter().rev()) {
                match marker {
                    Some(m) => assert_eq!(t, task.words.image(w, m).unwrap()),
                    None => {
                        // Without a marker the sense is free; anything
                        // else still maps through the dictionary.
                        let ok =
                            task.words.image(w, 0) == Some(t) || task.words.image(w, 1) == Some(t);
                        assert!(ok, "token {t} is not an image of word {w}");
                    }
                }
            }
        }
    }

    #[test]
    fn training_mixes_marked_and_unmarked_sentences() {
        let cfg = SyntheticConfig {
            train_pairs: 400,
            no_marker_rate: 0.10,
            ..small_cfg()
        };
        let task = generate(&cfg).unwrap();
        let unmarked = task
            .train
            .iter()
            .filter(|p| marker_of(&p.source, &task.words).is_none())
            .count();
        // Rate 0.1 over 400 draws; loose binomial bounds.
        assert!(
            (10..=90).contains(&unmarked),
            "unmarked count {unmarked} implausible"
        );
        for item in &task.test {
            assert!(
                marker_of(&item.source, &task.words).is_some(),
                "test stays marked"
            );
        }
        let none = SyntheticConfig {
            no_marker_rate: 0.0,
            ..cfg
        };
        let task = generate(&none).unwrap();
        assert!(task
            .train
            .iter()
            .all(|p| marker_of(&p.source, &task.words).is_some()));
    }

    #[test]
    fn base_splits_never_contain_idiom_constructions() {
        let task = generate(&small_cfg()).unwrap();
        let is_idiom = |id: u32| task.words.idiom_targets.contains(&id);
        for pair in &task.train {
            assert!(idiom_adjacencies(&pair.source, &task.words).is_empty());
            assert!(collocation_adjacencies(&pair.source, &task.words).is_empty());
            assert!(!pair.target.iter().any(|&t| is_idiom(t)));
        }
        for item in &task.test {
            assert!(collocation_adjacencies(&item.source, &task.words).is_empty());
            assert!(!item.reference.iter().any(|&t| is_idiom(t)));
        }
        for item in &task.ambiguous_eval {
            assert!(idiom_adjacencies(&item.source, &task.words).is_empty());
            assert!(collocation_adjacencies(&item.source, &task.words).is_empty());
        }
    }

    #[test]
    fn idiom_splits_contain_exactly_one_annotated_construction() {
        let task = generate(&small_cfg()).unwrap();
        let (mut fused_seen, mut colloc_seen) = (0usize, 0usize);
        for pair in &task.adapt_train {
            let fused = idiom_adjacencies(&pair.source, &task.words);
            let colloc = collocation_adjacencies(&pair.source, &task.words);
            assert_eq!(
                fused.len() + colloc.len(),
                1,
                "exactly one construction per pair"
            );
        }
        for item in &task.idiom_eval {
            let (src_span, ref_span) = item.span.clone().unwrap();
            assert_eq!(src_span.len(), 2);
            assert_eq!(ref_span.len(), 1);
            let fused = idiom_adjacencies(&item.source, &task.words);
            let colloc = collocation_adjacencies(&item.source, &task.words);
            if let [(p, t)] = fused[..] {
                assert!(colloc.is_empty());
                assert_eq!(src_span, p..p + 2);
                assert_eq!(item.reference[ref_span.start], task.words.idiom_targets[t]);
                fused_seen += 1;
            } else if let [(p, j)] = colloc[..] {
                assert_eq!(src_span, p..p + 2);
                assert_eq!(
                    item.reference[ref_span.start],
                    task.words.sense_targets[j][1]
                );
                assert!(
                    marker_of(&item.source, &task.words).is_none(),
                    "collocations live in unmarked sentences"
                );
                colloc_seen += 1;
            } else {
                panic!("eval item carries no single construction");
            }
        }
        assert_eq!(fused_seen, 8);
        assert_eq!(colloc_seen, 8);
    }

    #[test]
    fn ambiguous_spans_follow_the_sentence_marker() {
        let task = generate(&small_cfg()).unwrap();
        let mut seen = [false; 2];
        for item in &task.ambiguous_eval {
            let (src_span, ref_span) = item.span.clone().unwrap();
            assert_eq!(src_span.len(), 1);
            assert_eq!(ref_span.len(), 1);
            let word = item.source[src_span.start];
            let j = task
                .words
                .ambiguous_source
                .iter()
                .position(|&w| w == word)
                .expect("span marks an ambiguous word");
            let marker = marker_of(&item.source, &task.words).unwrap();
            seen[marker] = true;
            assert_eq!(
                item.reference[ref_span.start],
                task.words.sense_targets[j][marker]
            );
        }
        assert!(seen[0] && seen[1], "both senses must occur in the eval set");
    }

    #[test]
    fn sense_tokens_never_leak_across_markers() {
        let task = generate(&small_cfg()).unwrap();
        for pair in &task.train {
            let Some(marker) = marker_of(&pair.source, &task.words) else {
                continue; // unmarked sentences choose senses freely
            };
            let wrong = 1 - marker;
            for senses in &task.words.sense_targets {
                assert!(
                    !pair.target.contains(&senses[wrong]),
                    "target holds the sense of the absent marker"
                );
            }
        }
    }

    #[test]
    fn sentence_lengths_respect_the_configured_range() {
        let cfg = small_cfg();
        let task = generate(&cfg).unwrap();
        for pair in &task.train {
            let marked = usize::from(marker_of(&pair.source, &task.words).is_some());
            let content = pair.source.len() - marked;
            assert!((cfg.min_words..=cfg.max_words).contains(&content));
            assert_eq!(
                pair.target.len(),
                pair.source.len() + 1,
                "reversal plus end marker"
            );
        }
    }

    #[test]
    fn bijective_corpus_maps_words_through_the_dictionary() {
        let (pairs, vocab, dict) = bijective_corpus(20, 50, 7);
        assert_eq!(pairs.len(), 50);
        assert_eq!(vocab, 44);
        assert_eq!(dict.len(), 20);
        let mut images = dict.iter().map(|&(_, t)| t).collect::<Vec<_>>();
        images.sort_unstable();
        images.dedup();
        assert_eq!(images.len(), 20, "dictionary is a bijection");
        let lookup = |s: u32| dict.iter().find(|&&(x, _)| x == s).unwrap().1;
        for p in &pairs {
            assert_eq!(p.target.len(), p.source.len() + 1);
            for (s, t) in p.source.iter().zip(&p.target) {
                assert_eq!(lookup(*s), *t, "monotone dictionary translation");
            }
        }
    }
}
