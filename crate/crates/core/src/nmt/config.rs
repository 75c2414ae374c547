//! Model hyperparameters.

use crate::error::{Error, Result};

/// How the positive-class weight of the vocabulary-prediction loss is
/// chosen. Present tokens are far rarer than absent ones, so they get
/// weighted up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PosWeightMode {
    /// One weight for every sentence.
    Fixed(f64),
    /// Balance positives against negatives per sentence: the weight is
    /// `strength * (V - n_pos) / n_pos`, clipped to at least one.
    Auto { strength: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub v_src: usize,
    pub v_tgt: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub label_smoothing: f64,
    pub dropout: f64,
    /// Longest sequence the positional encoding covers.
    pub max_len: usize,
    pub pos_weight: PosWeightMode,
}

impl ModelConfig {
    /// Small configuration that trains in minutes on one core.
    pub fn small(v_src: usize, v_tgt: usize) -> Self {
        Self {
            v_src,
            v_tgt,
            d_model: 64,
            n_heads: 4,
            d_ffn: 256,
            enc_layers: 4,
            dec_layers: 2,
            label_smoothing: 0.1,
            dropout: 0.1,
            max_len: 256,
            // Scale-free imbalance correction: the weight tracks the
            // negative-to-positive ratio of each sentence's target set.
            // Strength below one keeps the sigmoid for a genuinely
            // uncertain token under the usual 0.9 decision threshold.
            pos_weight: PosWeightMode::Auto { strength: 0.55 },
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_src < 5 || self.v_tgt < 5 {
            return Err(Error::InvalidInput(
                "vocabulary must hold the four reserved tokens plus content".into(),
            ));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_ffn == 0 {
            return Err(Error::InvalidInput("zero-sized model dimension".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidInput(format!(
                "width {} is not divisible into {} heads",
                self.d_model, self.n_heads
            )));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return Err(Error::InvalidInput(
                "need at least one layer per side".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidInput(format!(
                "label smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.max_len < 2 {
            return Err(Error::InvalidInput("positional table too short".into()));
        }
        match self.pos_weight {
            PosWeightMode::Fixed(w) if !(w.is_finite() && w > 0.0) => {
                Err(Error::InvalidInput(format!("fixed positive weight {w}")))
            }
            PosWeightMode::Auto { strength } if !(strength.is_finite() && strength > 0.0) => Err(
                Error::InvalidInput(format!("auto positive weight strength {strength}")),
            ),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_config_is_valid() {
        assert!(ModelConfig::small(100, 120).validate().is_ok());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = ModelConfig::small(100, 120);
        c.d_model = 63;
        assert!(c.validate().is_err(), "width must divide into heads");
        let mut c = ModelConfig::small(100, 120);
        c.label_smoothing = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::small(100, 120);
        c.pos_weight = PosWeightMode::Fixed(0.0);
        assert!(c.validate().is_err());
        let c = ModelConfig::small(3, 120);
        assert!(c.validate().is_err(), "vocab must cover reserved ids");
    }
}
