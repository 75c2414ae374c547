//! Corpus preparation: tokenization, subword segmentation, vocabularies,
//! pair cleaning and bag-of-words training targets.

mod bow;
mod bpe;
mod clean;
mod tokenize;
mod vocab;

pub use bow::{extract_bow, BowTarget};
pub use bpe::{detokenize, join_subwords, BpeModel, END_OF_WORD};
pub use clean::{clean_pair, clean_pairs, CleanConfig, RejectRule};
pub use tokenize::tokenize;
pub use vocab::{
    Vocabulary, BOS_ID, BOS_TOKEN, EOS_ID, EOS_TOKEN, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN,
};

/// One parallel sentence, encoded as vocabulary ids.
///
/// The source carries no sentence-end marker (the encoder appends one);
/// the target must end with [`EOS_ID`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SentencePair {
    pub source: Vec<u32>,
    pub target: Vec<u32>,
}

impl SentencePair {
    pub fn new(source: Vec<u32>, target: Vec<u32>) -> Self {
        debug_assert_eq!(target.last(), Some(&EOS_ID), "target must end with EOS");
        Self { source, target }
    }
}
