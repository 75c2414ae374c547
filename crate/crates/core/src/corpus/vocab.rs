//! Token-to-id vocabulary with four reserved entries.
//!
//! On disk a vocabulary is UTF-8, one token per line, id equal to line
//! number. The first four lines are always the reserved specials.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, Write};

pub const PAD_TOKEN: &str = "⟨pad⟩";
pub const UNK_TOKEN: &str = "⟨unk⟩";
pub const BOS_TOKEN: &str = "⟨bos⟩";
pub const EOS_TOKEN: &str = "⟨eos⟩";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

const SPECIALS: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN];

#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from token counts: specials first, then tokens
    /// by descending count, ties by token string ascending.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut ranked: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(t, _)| !SPECIALS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_ordered_tokens(ranked.into_iter().map(|(t, _)| t))
            .expect("counts cannot contain duplicates or specials")
    }

    /// Builds from an explicit token order (specials are prepended).
    pub fn from_ordered_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (id, tok) in all.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::InvalidInput("empty vocabulary token".into()));
            }
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate vocabulary token {tok:?}"
                )));
            }
        }
        Ok(Self { tokens: all, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the four specials are always present
    }

    /// Id for a token, falling back to the unknown id.
    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Id for a token only if it is actually in the vocabulary.
    pub fn lookup_strict(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "token id {id} outside vocabulary of {}",
                    self.len()
                ))
            })
    }

    pub fn contains_id(&self, id: u32) -> bool {
        (id as usize) < self.tokens.len()
    }

    pub fn is_special(id: u32) -> bool {
        id < 4
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }

    pub fn save(&self, mut w: impl Write) -> Result<()> {
        for tok in &self.tokens {
            writeln!(w, "{tok}")?;
        }
        Ok(())
    }

    pub fn load(r: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.is_empty() {
                return Err(Error::Format("empty line in vocabulary file".into()));
            }
            tokens.push(line);
        }
        if tokens.len() < SPECIALS.len() {
            return Err(Error::Format(format!(
                "vocabulary has {} lines, needs at least the {} reserved tokens",
                tokens.len(),
                SPECIALS.len()
            )));
        }
        for (i, want) in SPECIALS.iter().enumerate() {
            if tokens[i] != *want {
                return Err(Error::Format(format!(
                    "vocabulary line {} is {:?}, expected reserved token {want:?}",
                    i + 1,
                    tokens[i]
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }
}
