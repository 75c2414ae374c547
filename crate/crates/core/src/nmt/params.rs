//! Parameter storage with one canonical array order.
//!
//! Everything that iterates over parameters (the optimizer, checkpoints,
//! tape registration, update scoping) goes through [`ModelParams::arrays`]
//! or [`ModelParams::arrays_mut`], so they can never disagree on order or
//! naming.

use super::config::ModelConfig;
use crate::numerics::{DenseMatrix, Real};
use crate::rng::stage_rng;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<T: Real> {
    pub gain: DenseMatrix<T>,
    pub bias: DenseMatrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams<T: Real> {
    pub wq: DenseMatrix<T>,
    pub wk: DenseMatrix<T>,
    pub wv: DenseMatrix<T>,
    pub wo: DenseMatrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FfnParams<T: Real> {
    pub w1: DenseMatrix<T>,
    pub b1: DenseMatrix<T>,
    pub w2: DenseMatrix<T>,
    pub b2: DenseMatrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayerParams<T: Real> {
    pub ln_attn: LayerNormParams<T>,
    pub attn: AttentionParams<T>,
    pub ln_ffn: LayerNormParams<T>,
    pub ffn: FfnParams<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLayerParams<T: Real> {
    pub ln_self: LayerNormParams<T>,
    pub self_attn: AttentionParams<T>,
    pub ln_cross: LayerNormParams<T>,
    pub cross_attn: AttentionParams<T>,
    pub ln_ffn: LayerNormParams<T>,
    pub ffn: FfnParams<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Real> {
    pub cfg: ModelConfig,
    /// Source and target embedding tables, vocab-by-width.
    pub src_embed: DenseMatrix<T>,
    pub tgt_embed: DenseMatrix<T>,
    pub encoder: Vec<EncoderLayerParams<T>>,
    pub enc_final_ln: LayerNormParams<T>,
    pub decoder: Vec<DecoderLayerParams<T>>,
    pub dec_final_ln: LayerNormParams<T>,
    /// Output projection to target-vocabulary logits.
    pub w_out: DenseMatrix<T>,
    pub b_out: DenseMatrix<T>,
    /// Vocabulary-prediction head over encoder states.
    pub w_nvs: DenseMatrix<T>,
    pub b_nvs: DenseMatrix<T>,
}

/// Prefix shared by the vocabulary-prediction head's arrays; update
/// scoping and parameter counting key off it.
pub const NVS_PREFIX: &str = "nvs.";

impl<T: Real> ModelParams<T> {
    /// All arrays with their canonical names, in canonical order.
    pub fn arrays(&self) -> Vec<(String, &DenseMatrix<T>)> {
        let mut out: Vec<(String, &DenseMatrix<T>)> = Vec::new();
        out.push(("src_embed".into(), &self.src_embed));
        out.push(("tgt_embed".into(), &self.tgt_embed));
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("enc.{i}.ln_attn.gain"), &l.ln_attn.gain));
            out.push((format!("enc.{i}.ln_attn.bias"), &l.ln_attn.bias));
            out.push((format!("enc.{i}.attn.wq"), &l.attn.wq));
            out.push((format!("enc.{i}.attn.wk"), &l.attn.wk));
            out.push((format!("enc.{i}.attn.wv"), &l.attn.wv));
            out.push((format!("enc.{i}.attn.wo"), &l.attn.wo));
            out.push((format!("enc.{i}.ln_ffn.gain"), &l.ln_ffn.gain));
            out.push((format!("enc.{i}.ln_ffn.bias"), &l.ln_ffn.bias));
            out.push((format!("enc.{i}.ffn.w1"), &l.ffn.w1));
            out.push((format!("enc.{i}.ffn.b1"), &l.ffn.b1));
            out.push((format!("enc.{i}.ffn.w2"), &l.ffn.w2));
            out.push((format!("enc.{i}.ffn.b2"), &l.ffn.b2));
        }
        out.push(("enc.final_ln.gain".into(), &self.enc_final_ln.gain));
        out.push(("enc.final_ln.bias".into(), &self.enc_final_ln.bias));
        for (i, l) in self.decoder.iter().enumerate() {
            out.push((format!("dec.{i}.ln_self.gain"), &l.ln_self.gain));
            out.push((format!("dec.{i}.ln_self.bias"), &l.ln_self.bias));
            out.push((format!("dec.{i}.self_attn.wq"), &l.self_attn.wq));
            out.push((format!("dec.{i}.self_attn.wk"), &l.self_attn.wk));
            out.push((format!("dec.{i}.self_attn.wv"), &l.self_attn.wv));
            out.push((format!("dec.{i}.self_attn.wo"), &l.self_attn.wo));
            out.push((format!("dec.{i}.ln_cross.gain"), &l.ln_cross.gain));
            out.push((format!("dec.{i}.ln_cross.bias"), &l.ln_cross.bias));
            out.push((format!("dec.{i}.cross_attn.wq"), &l.cross_attn.wq));
            out.push((format!("dec.{i}.cross_attn.wk"), &l.cross_attn.wk));
            out.push((format!("dec.{i}.cross_attn.wv"), &l.cross_attn.wv));
            out.push((format!("dec.{i}.cross_attn.wo"), &l.cross_attn.wo));
            out.push((format!("dec.{i}.ln_ffn.gain"), &l.ln_ffn.gain));
            out.push((format!("dec.{i}.ln_ffn.bias"), &l.ln_ffn.bias));
            out.push((format!("dec.{i}.ffn.w1"), &l.ffn.w1));
            out.push((format!("dec.{i}.ffn.b1"), &l.ffn.b1));
            out.push((format!("dec.{i}.ffn.w2"), &l.ffn.w2));
            out.push((format!("dec.{i}.ffn.b2"), &l.ffn.b2));
        }
        out.push(("dec.final_ln.gain".into(), &self.dec_final_ln.gain));
        out.push(("dec.final_ln.bias".into(), &self.dec_final_ln.bias));
        out.push(("out.w".into(), &self.w_out));
        out.push(("out.b".into(), &self.b_out));
        out.push((format!("{NVS_PREFIX}w"), &self.w_nvs));
        out.push((format!("{NVS_PREFIX}b"), &self.b_nvs));
        out
    }

    /// Mutable view in the same order as [`Self::arrays`].
    pub fn arrays_mut(&mut self) -> Vec<(String, &mut DenseMatrix<T>)> {
        let mut out: Vec<(String, &mut DenseMatrix<T>)> = Vec::new();
        out.push(("src_embed".into(), &mut self.src_embed));
        out.push(("tgt_embed".into(), &mut self.tgt_embed));
        for (i, l) in self.encoder.iter_mut().enumerate() {
            out.push((format!("enc.{i}.ln_attn.gain"), &mut l.ln_attn.gain));
            out.push((format!("enc.{i}.ln_attn.bias"), &mut l.ln_attn.bias));
            out.push((format!("enc.{i}.attn.wq"), &mut l.attn.wq));
            out.push((format!("enc.{i}.attn.wk"), &mut l.attn.wk));
            out.push((format!("enc.{i}.attn.wv"), &mut l.attn.wv));
            out.push((format!("enc.{i}.attn.wo"), &mut l.attn.wo));
            out.push((format!("enc.{i}.ln_ffn.gain"), &mut l.ln_ffn.gain));
            out.push((format!("enc.{i}.ln_ffn.bias"), &mut l.ln_ffn.bias));
            out.push((format!("enc.{i}.ffn.w1"), &mut l.ffn.w1));
            out.push((format!("enc.{i}.ffn.b1"), &mut l.ffn.b1));
            out.push((format!("enc.{i}.ffn.w2"), &mut l.ffn.w2));
            out.push((format!("enc.{i}.ffn.b2"), &mut l.ffn.b2));
        }
        out.push(("enc.final_ln.gain".into(), &mut self.enc_final_ln.gain));
        out.push(("enc.final_ln.bias".into(), &mut self.enc_final_ln.bias));
        for (i, l) in self.decoder.iter_mut().enumerate() {
            out.push((format!("dec.{i}.ln_self.gain"), &mut l.ln_self.gain));
            out.push((format!("dec.{i}.ln_self.bias"), &mut l.ln_self.bias));
            out.push((format!("dec.{i}.self_attn.wq"), &mut l.self_attn.wq));
            out.push((format!("dec.{i}.self_attn.wk"), &mut l.self_attn.wk));
            out.push((format!("dec.{i}.self_attn.wv"), &mut l.self_attn.wv));
            out.push((format!("dec.{i}.self_attn.wo"), &mut l.self_attn.wo));
            out.push((format!("dec.{i}.ln_cross.gain"), &mut l.ln_cross.gain));
            out.push((format!("dec.{i}.ln_cross.bias"), &mut l.ln_cross.bias));
            out.push((format!("dec.{i}.cross_attn.wq"), &mut l.cross_attn.wq));
            out.push((format!("dec.{i}.cross_attn.wk"), &mut l.cross_attn.wk));
            out.push((format!("dec.{i}.cross_attn.wv"), &mut l.cross_attn.wv));
            out.push((format!("dec.{i}.cross_attn.wo"), &mut l.cross_attn.wo));
            out.push((format!("dec.{i}.ln_ffn.gain"), &mut l.ln_ffn.gain));
            out.push((format!("dec.{i}.ln_ffn.bias"), &mut l.ln_ffn.bias));
            out.push((format!("dec.{i}.ffn.w1"), &mut l.ffn.w1));
            out.push((format!("dec.{i}.ffn.b1"), &mut l.ffn.b1));
            out.push((format!("dec.{i}.ffn.w2"), &mut l.ffn.w2));
            out.push((format!("dec.{i}.ffn.b2"), &mut l.ffn.b2));
        }
        out.push(("dec.final_ln.gain".into(), &mut self.dec_final_ln.gain));
        out.push(("dec.final_ln.bias".into(), &mut self.dec_final_ln.bias));
        out.push(("out.w".into(), &mut self.w_out));
        out.push(("out.b".into(), &mut self.b_out));
        out.push((format!("{NVS_PREFIX}w"), &mut self.w_nvs));
        out.push((format!("{NVS_PREFIX}b"), &mut self.b_nvs));
        out
    }

    pub fn param_count(&self) -> usize {
        self.arrays().iter().map(|(_, m)| m.rows() * m.cols()).sum()
    }

    /// All-zero parameters with the shapes the configuration dictates;
    /// the skeleton deserialization fills in.
    pub fn zeros(cfg: ModelConfig) -> crate::error::Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let zero_ln = || LayerNormParams {
            gain: DenseMatrix::zeros(d, 1),
            bias: DenseMatrix::zeros(d, 1),
        };
        let zero_attn = || AttentionParams {
            wq: DenseMatrix::zeros(d, d),
            wk: DenseMatrix::zeros(d, d),
            wv: DenseMatrix::zeros(d, d),
            wo: DenseMatrix::zeros(d, d),
        };
        let zero_ffn = || FfnParams {
            w1: DenseMatrix::zeros(cfg.d_ffn, d),
            b1: DenseMatrix::zeros(cfg.d_ffn, 1),
            w2: DenseMatrix::zeros(d, cfg.d_ffn),
            b2: DenseMatrix::zeros(d, 1),
        };
        Ok(Self {
            src_embed: DenseMatrix::zeros(cfg.v_src, d),
            tgt_embed: DenseMatrix::zeros(cfg.v_tgt, d),
            encoder: (0..cfg.enc_layers)
                .map(|_| EncoderLayerParams {
                    ln_attn: zero_ln(),
                    attn: zero_attn(),
                    ln_ffn: zero_ln(),
                    ffn: zero_ffn(),
                })
                .collect(),
            enc_final_ln: zero_ln(),
            decoder: (0..cfg.dec_layers)
                .map(|_| DecoderLayerParams {
                    ln_self: zero_ln(),
                    self_attn: zero_attn(),
                    ln_cross: zero_ln(),
                    cross_attn: zero_attn(),
                    ln_ffn: zero_ln(),
                    ffn: zero_ffn(),
                })
                .collect(),
            dec_final_ln: zero_ln(),
            w_out: DenseMatrix::zeros(cfg.v_tgt, d),
            b_out: DenseMatrix::zeros(cfg.v_tgt, 1),
            w_nvs: DenseMatrix::zeros(cfg.v_tgt, d),
            b_nvs: DenseMatrix::zeros(cfg.v_tgt, 1),
            cfg,
        })
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            cfg: self.cfg.clone(),
            src_embed: self.src_embed.cast(),
            tgt_embed: self.tgt_embed.cast(),
            encoder: self
                .encoder
                .iter()
                .map(|l| EncoderLayerParams {
                    ln_attn: l.ln_attn.cast(),
                    attn: l.attn.cast(),
                    ln_ffn: l.ln_ffn.cast(),
                    ffn: l.ffn.cast(),
                })
                .collect(),
            enc_final_ln: self.enc_final_ln.cast(),
            decoder: self
                .decoder
                .iter()
                .map(|l| DecoderLayerParams {
                    ln_self: l.ln_self.cast(),
                    self_attn: l.self_attn.cast(),
                    ln_cross: l.ln_cross.cast(),
                    cross_attn: l.cross_attn.cast(),
                    ln_ffn: l.ln_ffn.cast(),
                    ffn: l.ffn.cast(),
                })
                .collect(),
            dec_final_ln: self.dec_final_ln.cast(),
            w_out: self.w_out.cast(),
            b_out: self.b_out.cast(),
            w_nvs: self.w_nvs.cast(),
            b_nvs: self.b_nvs.cast(),
        }
    }
}

impl<T: Real> LayerNormParams<T> {
    fn cast<U: Real>(&self) -> LayerNormParams<U> {
        LayerNormParams {
            gain: self.gain.cast(),
            bias: self.bias.cast(),
        }
    }
}

impl<T: Real> AttentionParams<T> {
    fn cast<U: Real>(&self) -> AttentionParams<U> {
        AttentionParams {
            wq: self.wq.cast(),
            wk: self.wk.cast(),
            wv: self.wv.cast(),
            wo: self.wo.cast(),
        }
    }
}

impl<T: Real> FfnParams<T> {
    fn cast<U: Real>(&self) -> FfnParams<U> {
        FfnParams {
            w1: self.w1.cast(),
            b1: self.b1.cast(),
            w2: self.w2.cast(),
            b2: self.b2.cast(),
        }
    }
}

// ── Initialization ──────────────────────────────────────────────────────

fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    DenseMatrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

fn embed_init(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix<f64> {
    let dist = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("finite std");
    DenseMatrix::from_fn(rows, cols, |_, _| dist.sample(rng))
}

fn layer_norm_init(d: usize) -> LayerNormParams<f64> {
    LayerNormParams {
        gain: DenseMatrix::filled(d, 1, 1.0),
        bias: DenseMatrix::zeros(d, 1),
    }
}

fn attention_init(d: usize, rng: &mut impl Rng) -> AttentionParams<f64> {
    AttentionParams {
        wq: xavier(d, d, rng),
        wk: xavier(d, d, rng),
        wv: xavier(d, d, rng),
        wo: xavier(d, d, rng),
    }
}

fn ffn_init(d: usize, d_ffn: usize, rng: &mut impl Rng) -> FfnParams<f64> {
    FfnParams {
        w1: xavier(d_ffn, d, rng),
        b1: DenseMatrix::zeros(d_ffn, 1),
        w2: xavier(d, d_ffn, rng),
        b2: DenseMatrix::zeros(d, 1),
    }
}

impl ModelParams<f64> {
    /// Fresh parameters; the same seed always yields the same values.
    pub fn init(cfg: ModelConfig, seed: u64) -> crate::error::Result<Self> {
        cfg.validate()?;
        let rng = &mut stage_rng(seed, "init");
        let d = cfg.d_model;
        let encoder = (0..cfg.enc_layers)
            .map(|_| EncoderLayerParams {
                ln_attn: layer_norm_init(d),
                attn: attention_init(d, rng),
                ln_ffn: layer_norm_init(d),
                ffn: ffn_init(d, cfg.d_ffn, rng),
            })
            .collect();
        let decoder = (0..cfg.dec_layers)
            .map(|_| DecoderLayerParams {
                ln_self: layer_norm_init(d),
                self_attn: attention_init(d, rng),
                ln_cross: layer_norm_init(d),
                cross_attn: attention_init(d, rng),
                ln_ffn: layer_norm_init(d),
                ffn: ffn_init(d, cfg.d_ffn, rng),
            })
            .collect();
        Ok(Self {
            src_embed: embed_init(cfg.v_src, d, rng),
            tgt_embed: embed_init(cfg.v_tgt, d, rng),
            encoder,
            enc_final_ln: layer_norm_init(d),
            decoder,
            dec_final_ln: layer_norm_init(d),
            w_out: xavier(cfg.v_tgt, d, rng),
            b_out: DenseMatrix::zeros(cfg.v_tgt, 1),
            w_nvs: xavier(cfg.v_tgt, d, rng),
            b_nvs: DenseMatrix::zeros(cfg.v_tgt, 1),
            cfg,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn tiny() -> ModelConfig {
        let mut cfg = ModelConfig::small(10, 12);
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.d_ffn = 16;
        cfg.enc_layers = 2;
        cfg.dec_layers = 1;
        cfg
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = ModelParams::init(tiny(), 7).unwrap();
        let b = ModelParams::init(tiny(), 7).unwrap();
        let c = ModelParams::init(tiny(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn array_names_are_unique_and_orders_agree() {
        let mut p = ModelParams::init(tiny(), 1).unwrap();
        let names: Vec<String> = p.arrays().into_iter().map(|(n, _)| n).collect();
        let unique: HashSet<&String> = names.iter().collect();
        assert_eq!(unique.len(), names.len(), "duplicate array name");
        let mut_names: Vec<String> = p.arrays_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, mut_names);
        assert!(names.iter().any(|n| n == "nvs.w"));
    }

    #[test]
    fn param_count_matches_hand_total() {
        let p = ModelParams::init(tiny(), 1).unwrap();
        let d = 8;
        let per_attn = 4 * d * d;
        let per_ffn = 16 * d + 16 + d * 16 + d;
        let per_ln = 2 * d;
        let enc = 2 * (per_attn + per_ffn + 2 * per_ln) + per_ln;
        let dec = 2 * per_attn + per_ffn + 3 * per_ln + per_ln;
        let expected = 10 * d + 12 * d + enc + dec + (12 * d + 12) * 2;
        assert_eq!(p.param_count(), expected);
    }

    #[test]
    fn cast_round_trip_preserves_f32_values() {
        let p = ModelParams::init(tiny(), 3).unwrap();
        let f32_p: ModelParams<f32> = p.cast();
        let back: ModelParams<f64> = f32_p.cast();
        let again: ModelParams<f32> = back.cast();
        assert_eq!(f32_p, again, "f32 -> f64 -> f32 must be exact");
    }
}
