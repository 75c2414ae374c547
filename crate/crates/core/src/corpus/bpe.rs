//! Byte-pair encoding learned from adjacent-symbol frequencies.
//!
//! Words are segmented into characters plus a separate end-of-word
//! symbol. Learning repeatedly merges the most frequent adjacent symbol
//! pair, breaking frequency ties by the lexicographically smallest
//! `(left, right)` pair. When a segmented word still ends in the bare
//! end-of-word symbol, emission fuses it onto the preceding subword, so
//! `"low"` under a model with the single merge `(l, o)` comes out as
//! `["lo", "w⟨/w⟩"]`.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, Write};

/// Marker appended to the final subword of each word.
pub const END_OF_WORD: &str = "⟨/w⟩";

const MERGES_HEADER: &str = "#shortlex-bpe v1";

/// Ordered merge list plus a rank index for fast application.
#[derive(Clone, Debug)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    /// `"left right"` joined by one space, mapped to merge rank. Tokens
    /// never contain spaces, so the joined form is unambiguous.
    ranks: HashMap<String, usize>,
}

fn pair_key(left: &str, right: &str) -> String {
    format!("{left} {right}")
}

impl BpeModel {
    /// Learns up to `num_merges` merges from an iterator of word tokens.
    /// Stops early once no adjacent pair occurs anywhere.
    pub fn learn<'a>(words: impl IntoIterator<Item = &'a str>, num_merges: usize) -> Result<Self> {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for w in words {
            if w.is_empty() {
                return Err(Error::InvalidInput("empty word in corpus".into()));
            }
            if w.contains(END_OF_WORD) {
                return Err(Error::InvalidInput(format!(
                    "word {w:?} contains the end-of-word marker"
                )));
            }
            *counts.entry(w).or_insert(0) += 1;
        }
        if counts.is_empty() {
            return Err(Error::InvalidInput(
                "cannot learn merges from an empty corpus".into(),
            ));
        }

        let mut entries: Vec<(Vec<String>, u64)> = counts
            .into_iter()
            .map(|(w, c)| {
                let mut syms: Vec<String> = w.chars().map(|ch| ch.to_string()).collect();
                syms.push(END_OF_WORD.to_string());
                (syms, c)
            })
            .collect();
        // Selection below is order-independent, but keep the entry order
        // fixed anyway so behavior never depends on hash iteration.
        entries.sort_by(|a, b| a.0.cmp(&b.0));

        let mut merges = Vec::with_capacity(num_merges);
        for _ in 0..num_merges {
            let mut pair_counts: HashMap<(&str, &str), u64> = HashMap::new();
            for (syms, c) in &entries {
                for win in syms.windows(2) {
                    *pair_counts.entry((&win[0], &win[1])).or_insert(0) += c;
                }
            }
            // Highest count wins; on ties the smallest (left, right) pair.
            let best = pair_counts
                .into_iter()
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
            let Some(((left, right), _)) = best else {
                break;
            };
            let (left, right) = (left.to_string(), right.to_string());
            for (syms, _) in &mut entries {
                merge_in_place(syms, &left, &right);
            }
            merges.push((left, right));
        }
        Ok(Self::from_merges(merges))
    }

    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, (l, r))| (pair_key(l, r), i))
            .collect();
        Self { merges, ranks }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Segments one word into subwords, replaying merges in learned order.
    pub fn apply(&self, token: &str) -> Result<Vec<String>> {
        if token.is_empty() {
            return Err(Error::InvalidInput("cannot segment an empty token".into()));
        }
        if token.contains(END_OF_WORD) {
            return Err(Error::InvalidInput(format!(
                "token {token:?} contains the end-of-word marker"
            )));
        }
        let mut syms: Vec<String> = token.chars().map(|ch| ch.to_string()).collect();
        syms.push(END_OF_WORD.to_string());
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for i in 0..syms.len() - 1 {
                if let Some(&rank) = self.ranks.get(&pair_key(&syms[i], &syms[i + 1])) {
                    if best.map_or(true, |(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.merges[rank];
            merge_in_place(&mut syms, left, right);
        }
        if syms.len() >= 2 && syms.last().map(String::as_str) == Some(END_OF_WORD) {
            let marker = syms.pop().expect("checked len");
            syms.last_mut().expect("checked len").push_str(&marker);
        }
        Ok(syms)
    }

    /// Segments a whole sentence, memoizing repeated words.
    pub fn apply_words<'a>(
        &self,
        words: impl IntoIterator<Item = &'a str>,
        cache: &mut HashMap<String, Vec<String>>,
    ) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for w in words {
            if let Some(hit) = cache.get(w) {
                out.extend_from_slice(hit);
            } else {
                let pieces = self.apply(w)?;
                out.extend_from_slice(&pieces);
                cache.insert(w.to_string(), pieces);
            }
        }
        Ok(out)
    }

    pub fn save(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{MERGES_HEADER}")?;
        for (l, r) in &self.merges {
            writeln!(w, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn load(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format("empty merges file".into()))?;
        if header != MERGES_HEADER {
            return Err(Error::Format(format!(
                "merges file starts with {header:?}, expected {MERGES_HEADER:?}"
            )));
        }
        let mut merges = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut it = line.split(' ');
            match (it.next(), it.next(), it.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    merges.push((l.to_string(), r.to_string()));
                }
                _ => {
                    return Err(Error::Format(format!(
                        "merges line {} is not `left right`",
                        n + 2
                    )));
                }
            }
        }
        Ok(Self::from_merges(merges))
    }
}

/// Replaces every adjacent `(left, right)` by their concatenation,
/// scanning left to right.
fn merge_in_place(syms: &mut Vec<String>, left: &str, right: &str) {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(std::mem::take(&mut syms[i]));
            i += 1;
        }
    }
    *syms = out;
}

/// Reverses segmentation: concatenates subwords and drops the markers.
pub fn join_subwords<S: AsRef<str>>(subwords: &[S]) -> String {
    let mut joined = String::new();
    for s in subwords {
        joined.push_str(s.as_ref());
    }
    joined.replace(END_OF_WORD, "")
}

/// Reverses segmentation for a whole sentence: each marker becomes a
/// word break. Tolerates a final word with no marker.
pub fn detokenize<S: AsRef<str>>(subwords: &[S]) -> String {
    let mut joined = String::new();
    for s in subwords {
        joined.push_str(s.as_ref());
    }
    joined.replace(END_OF_WORD, " ").trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_model_yields_character_sequence() {
        let model = BpeModel::from_merges(vec![]);
        assert_eq!(
            model.apply("ab").unwrap(),
            vec!["a".to_string(), format!("b{END_OF_WORD}")]
        );
        assert_eq!(model.apply("x").unwrap(), vec![format!("x{END_OF_WORD}")]);
    }

    #[test]
    fn repeated_word_learns_its_doubled_character() {
        // Only candidate pairs are (a, a) and (a, marker); the tie breaks
        // to the lexicographically smaller (a, a).
        let model = BpeModel::learn(["aa", "aa", "aa"], 1).unwrap();
        assert_eq!(model.merges(), &[("a".to_string(), "a".to_string())]);
    }

    #[test]
    fn tie_break_picks_smallest_pair() {
        // (l, o) and (o, w) both occur three times; (l, o) is smaller.
        let model = BpeModel::learn(["low", "low", "lower"], 1).unwrap();
        assert_eq!(model.merges(), &[("l".to_string(), "o".to_string())]);
        assert_eq!(
            model.apply("low").unwrap(),
            vec!["lo".to_string(), format!("w{END_OF_WORD}")]
        );
    }

    #[test]
    fn merges_apply_in_learned_order() {
        let model = BpeModel::learn(["low", "low", "lower", "lowest"], 3).unwrap();
        let segmented = model.apply("lowest").unwrap();
        assert_eq!(join_subwords(&segmented), "lowest");
        // Deep merges keep frequent words intact.
        let model = BpeModel::learn(["low", "low", "lower"], 10).unwrap();
        assert_eq!(
            model.apply("low").unwrap(),
            vec![format!("low{END_OF_WORD}")]
        );
    }

    #[test]
    fn learning_stops_when_pairs_run_out() {
        let model = BpeModel::learn(["ab"], 100).unwrap();
        assert!(model.merges().len() < 100);
        assert_eq!(model.apply("ab").unwrap(), vec![format!("ab{END_OF_WORD}")]);
    }

    #[test]
    fn merges_file_round_trip() {
        let model = BpeModel::learn(["low", "low", "lower", "newest", "widest"], 8).unwrap();
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#shortlex-bpe v1\n"));
        let loaded = BpeModel::load(&buf[..]).unwrap();
        assert_eq!(loaded.merges(), model.merges());
        assert_eq!(
            loaded.apply("lowest").unwrap(),
            model.apply("lowest").unwrap()
        );
    }

    #[test]
    fn rejects_bad_merges_file() {
        assert!(BpeModel::load(&b"#wrong header\nl o\n"[..]).is_err());
        assert!(BpeModel::load(&b"#shortlex-bpe v1\nl o extra\n"[..]).is_err());
        assert!(BpeModel::load(&b""[..]).is_err());
    }

    proptest! {
        #[test]
        fn segmentation_round_trips(
            words in proptest::collection::vec("[a-d]{1,6}", 1..20),
            merges in 0usize..12,
        ) {
            let model = BpeModel::learn(words.iter().map(String::as_str), merges).unwrap();
            for w in &words {
                let pieces = model.apply(w).unwrap();
                prop_assert_eq!(join_subwords(&pieces), w.clone());
            }
            // Unseen words segment and round-trip too.
            let pieces = model.apply("dcba").unwrap();
            prop_assert_eq!(join_subwords(&pieces), "dcba");
        }
    }
}
