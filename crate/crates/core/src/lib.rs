//! Vocabulary selection for encoder-decoder translation models.
//!
//! The crate bundles everything needed to train a small translation model
//! whose decoder only scores a per-sentence shortlist of target words:
//!
//! * [`numerics`]: dense matrices and a reverse-mode gradient tape,
//! * [`corpus`]: tokenizer, byte-pair encoding, vocabulary files, cleaning,
//! * [`aligner`]: EM word alignment and translation lexicon extraction,
//! * [`nmt`]: the transformer, its selection head, losses and training,
//! * [`selection`]: per-sentence target-vocabulary shortlists,
//! * [`decode`]: beam search over the full or the restricted vocabulary,
//! * [`bench`]: recall, sweep, BLEU and latency measurement,
//! * [`synthetic`]: deterministic toy translation tasks for end-to-end tests.

pub mod aligner;
pub mod bench;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod nmt;
pub mod numerics;
pub mod rng;
pub mod selection;
pub mod synthetic;

pub use error::{Error, Result};
