//! Encoder-decoder translation model with a vocabulary-prediction head.
//!
//! The architecture is a small pre-norm transformer. The encoder output
//! feeds two consumers: the decoder (through cross-attention) and a
//! per-token scoring head whose column-wise max pool predicts, for every
//! target vocabulary entry, whether it appears in the translation. That
//! prediction is trained jointly with translation but its gradients stop
//! at the encoder output, so translation quality never pays for it.
//!
//! Training runs in `f64` on a recorded tape ([`losses`], [`train`]);
//! inference is generic over the float width ([`model`]), so decoding can
//! run in `f32`. Checkpoints store `f32` ([`checkpoint`]).

pub mod checkpoint;
pub mod config;
pub mod losses;
pub mod model;
pub mod params;
pub mod train;

pub use checkpoint::{
    inspect_checkpoint, lexicon_entry_count, load_checkpoint, nvs_float_count, save_checkpoint,
    CheckpointSummary,
};
pub use config::{ModelConfig, PosWeightMode};
pub use losses::{
    nvs_normalizer, register_params, resolve_pos_weight, sentence_forward, sentence_nvs_forward,
    SentenceForward, TapeParams,
};
pub use model::{
    decode_step, decode_teacher_forced, encode, nvs_scores, positional_encoding, start_decoder,
    with_eos, DecoderCaches, EncoderStates,
};
pub use params::ModelParams;
pub use train::{finetune, train, AdamState, FinetuneConfig, TrainConfig, TrainStats, UpdateScope};
