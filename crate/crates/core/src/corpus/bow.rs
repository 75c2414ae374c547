//! Bag-of-words targets for the selection head.

use super::vocab::{BOS_ID, EOS_ID, PAD_ID};
use super::SentencePair;
use crate::error::{Error, Result};

/// Which target-vocabulary entries occur in one sentence.
///
/// The sentence-final end marker counts as occurring; padding and the
/// decoder start marker never do.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BowTarget {
    bits: Vec<bool>,
}

impl BowTarget {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn vocab_size(&self) -> usize {
        self.bits.len()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.bits.get(id as usize).copied().unwrap_or(false)
    }

    /// Number of set bits.
    pub fn n_pos(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u32)
    }
}

/// Marks every target token of `pair` in a vocabulary-sized bit vector.
pub fn extract_bow(pair: &SentencePair, v_tgt: usize) -> Result<BowTarget> {
    if pair.target.is_empty() || *pair.target.last().expect("non-empty") != EOS_ID {
        return Err(Error::InvalidInput(
            "target sequence must end with the end marker".into(),
        ));
    }
    let mut bits = vec![false; v_tgt];
    for &id in &pair.target {
        if id == PAD_ID || id == BOS_ID {
            continue;
        }
        let i = id as usize;
        if i >= v_tgt {
            return Err(Error::InvalidInput(format!(
                "target id {id} outside vocabulary of {v_tgt}"
            )));
        }
        bits[i] = true;
    }
    Ok(BowTarget { bits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::UNK_ID;

    #[test]
    fn marks_unique_target_ids_and_eos() {
        let pair = SentencePair::new(vec![9], vec![5, 7, 5, EOS_ID]);
        let bow = extract_bow(&pair, 10).unwrap();
        assert!(bow.contains(5) && bow.contains(7) && bow.contains(EOS_ID));
        assert_eq!(bow.n_pos(), 3);
        assert_eq!(bow.ids().collect::<Vec<_>>(), vec![EOS_ID, 5, 7]);
    }

    #[test]
    fn padding_and_start_marker_never_count() {
        let pair = SentencePair {
            source: vec![4],
            target: vec![PAD_ID, BOS_ID, 4, EOS_ID],
        };
        let bow = extract_bow(&pair, 6).unwrap();
        assert!(!bow.contains(PAD_ID));
        assert!(!bow.contains(BOS_ID));
        assert!(bow.contains(UNK_ID) == false);
        assert_eq!(bow.n_pos(), 2); // the token and the end marker
    }

    #[test]
    fn rejects_missing_end_marker_and_bad_ids() {
        let no_eos = SentencePair {
            source: vec![4],
            target: vec![4, 5],
        };
        assert!(extract_bow(&no_eos, 10).is_err());
        let out_of_range = SentencePair {
            source: vec![4],
            target: vec![42, EOS_ID],
        };
        assert!(extract_bow(&out_of_range, 10).is_err());
    }
}
