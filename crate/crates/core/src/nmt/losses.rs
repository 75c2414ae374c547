//! Recorded training forward pass and the two loss terms.
//!
//! Each sentence builds its own graph on a shared tape: a teacher-forced
//! translation loss (label-smoothed cross entropy) and a vocabulary
//! prediction loss (weighted binary cross entropy on max-pooled encoder
//! scores, normalized so its scale is comparable to the translation
//! term). The encoder output variable is returned so the caller can make
//! it a backward boundary, which keeps vocabulary-prediction gradients
//! out of the encoder.

use super::config::{ModelConfig, PosWeightMode};
use super::model::{with_eos, MASK_NEG};
use super::params::ModelParams;
use crate::corpus::{BowTarget, SentencePair, BOS_ID};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Tape, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

pub struct TapeLayerNorm {
    pub gain: Var,
    pub bias: Var,
}

pub struct TapeAttention {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

pub struct TapeFfn {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

pub struct TapeEncoderLayer {
    pub ln_attn: TapeLayerNorm,
    pub attn: TapeAttention,
    pub ln_ffn: TapeLayerNorm,
    pub ffn: TapeFfn,
}

pub struct TapeDecoderLayer {
    pub ln_self: TapeLayerNorm,
    pub self_attn: TapeAttention,
    pub ln_cross: TapeLayerNorm,
    pub cross_attn: TapeAttention,
    pub ln_ffn: TapeLayerNorm,
    pub ffn: TapeFfn,
}

/// Model parameters registered on a tape, plus the canonical
/// name-to-variable list the optimizer walks.
pub struct TapeParams {
    pub src_embed: Var,
    pub tgt_embed: Var,
    pub encoder: Vec<TapeEncoderLayer>,
    pub enc_final_ln: TapeLayerNorm,
    pub decoder: Vec<TapeDecoderLayer>,
    pub dec_final_ln: TapeLayerNorm,
    pub w_out: Var,
    pub b_out: Var,
    pub w_nvs: Var,
    pub b_nvs: Var,
    ordered: Vec<(String, Var)>,
}

impl TapeParams {
    /// Canonical `(name, variable)` order, matching
    /// [`ModelParams::arrays`].
    pub fn ordered(&self) -> &[(String, Var)] {
        &self.ordered
    }
}

/// Puts every parameter array on the tape as a differentiable leaf.
pub fn register_params(tape: &mut Tape, p: &ModelParams<f64>) -> TapeParams {
    let mut ordered = Vec::new();
    let mut by_name = HashMap::new();
    for (name, m) in p.arrays() {
        let var = tape.param(m.clone());
        by_name.insert(name.clone(), var);
        ordered.push((name, var));
    }
    let g = |n: &str| *by_name.get(n).expect("canonical order covers every array");
    let ln = |prefix: &str| TapeLayerNorm {
        gain: g(&format!("{prefix}.gain")),
        bias: g(&format!("{prefix}.bias")),
    };
    let attn = |prefix: &str| TapeAttention {
        wq: g(&format!("{prefix}.wq")),
        wk: g(&format!("{prefix}.wk")),
        wv: g(&format!("{prefix}.wv")),
        wo: g(&format!("{prefix}.wo")),
    };
    let ffn = |prefix: &str| TapeFfn {
        w1: g(&format!("{prefix}.w1")),
        b1: g(&format!("{prefix}.b1")),
        w2: g(&format!("{prefix}.w2")),
        b2: g(&format!("{prefix}.b2")),
    };
    TapeParams {
        src_embed: g("src_embed"),
        tgt_embed: g("tgt_embed"),
        encoder: (0..p.cfg.enc_layers)
            .map(|i| TapeEncoderLayer {
                ln_attn: ln(&format!("enc.{i}.ln_attn")),
                attn: attn(&format!("enc.{i}.attn")),
                ln_ffn: ln(&format!("enc.{i}.ln_ffn")),
                ffn: ffn(&format!("enc.{i}.ffn")),
            })
            .collect(),
        enc_final_ln: ln("enc.final_ln"),
        decoder: (0..p.cfg.dec_layers)
            .map(|i| TapeDecoderLayer {
                ln_self: ln(&format!("dec.{i}.ln_self")),
                self_attn: attn(&format!("dec.{i}.self_attn")),
                ln_cross: ln(&format!("dec.{i}.ln_cross")),
                cross_attn: attn(&format!("dec.{i}.cross_attn")),
                ln_ffn: ln(&format!("dec.{i}.ln_ffn")),
                ffn: ffn(&format!("dec.{i}.ffn")),
            })
            .collect(),
        dec_final_ln: ln("dec.final_ln"),
        w_out: g("out.w"),
        b_out: g("out.b"),
        w_nvs: g("nvs.w"),
        b_nvs: g("nvs.b"),
        ordered,
    }
}

/// Inverted dropout driven by an optional generator; absent generator or
/// zero rate passes activations through untouched.
struct Dropout<'a> {
    rng: Option<&'a mut ChaCha8Rng>,
    rate: f64,
}

impl Dropout<'_> {
    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if self.rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        let (r, c) = tape.value(x).shape();
        let mask = DenseMatrix::from_fn(
            r,
            c,
            |_, _| if rng.gen::<f64>() < keep { scale } else { 0.0 },
        );
        let m = tape.constant(mask);
        tape.hadamard(x, m)
    }
}

fn attention_tape(
    tape: &mut Tape,
    a: &TapeAttention,
    xq: Var,
    xkv: Var,
    n_heads: usize,
    causal: bool,
) -> Result<Var> {
    let q = tape.matmul(a.wq, xq)?;
    let k = tape.matmul(a.wk, xkv)?;
    let v = tape.matmul(a.wv, xkv)?;
    let d = tape.value(q).rows();
    let dh = d / n_heads;
    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let mask = if causal {
        let (tq, tk) = (tape.value(q).cols(), tape.value(k).cols());
        Some(tape.constant(DenseMatrix::from_fn(tq, tk, |i, j| {
            if j > i {
                MASK_NEG
            } else {
                0.0
            }
        })))
    } else {
        None
    };
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = tape.slice_rows(q, h * dh, dh)?;
        let kh = tape.slice_rows(k, h * dh, dh)?;
        let vh = tape.slice_rows(v, h * dh, dh)?;
        let s = tape.matmul_ta(qh, kh)?;
        let mut s = tape.scale(s, inv_sqrt);
        if let Some(m) = mask {
            s = tape.add(s, m)?;
        }
        let probs = tape.row_softmax(s)?;
        heads.push(tape.matmul_tb(vh, probs)?);
    }
    let cat = tape.concat_rows(&heads)?;
    tape.matmul(a.wo, cat)
}

fn ffn_tape(tape: &mut Tape, f: &TapeFfn, x: Var) -> Result<Var> {
    let h = tape.matmul(f.w1, x)?;
    let h = tape.add_col(h, f.b1)?;
    let h = tape.gelu(h);
    let out = tape.matmul(f.w2, h)?;
    tape.add_col(out, f.b2)
}

fn embed_tape(
    tape: &mut Tape,
    table: Var,
    ids: &[u32],
    d: usize,
    drop: &mut Dropout,
) -> Result<Var> {
    let e = tape.embed_cols(table, ids)?;
    let e = tape.scale(e, (d as f64).sqrt());
    let pe = tape.constant(super::model::positional_encoding(d, ids.len()));
    let x = tape.add(e, pe)?;
    drop.apply(tape, x)
}

fn encoder_tape(
    tape: &mut Tape,
    tp: &TapeParams,
    cfg: &ModelConfig,
    src: &[u32],
    drop: &mut Dropout,
) -> Result<Var> {
    let ids = with_eos(src);
    let mut x = embed_tape(tape, tp.src_embed, &ids, cfg.d_model, drop)?;
    for layer in &tp.encoder {
        let xn = tape.layer_norm_cols(x, layer.ln_attn.gain, layer.ln_attn.bias)?;
        let a = attention_tape(tape, &layer.attn, xn, xn, cfg.n_heads, false)?;
        let a = drop.apply(tape, a)?;
        x = tape.add(x, a)?;
        let xn = tape.layer_norm_cols(x, layer.ln_ffn.gain, layer.ln_ffn.bias)?;
        let f = ffn_tape(tape, &layer.ffn, xn)?;
        let f = drop.apply(tape, f)?;
        x = tape.add(x, f)?;
    }
    tape.layer_norm_cols(x, tp.enc_final_ln.gain, tp.enc_final_ln.bias)
}

fn nvs_loss_tape(
    tape: &mut Tape,
    tp: &TapeParams,
    cfg: &ModelConfig,
    enc_out: Var,
    bow: &BowTarget,
) -> Result<Var> {
    let scores = tape.matmul(tp.w_nvs, enc_out)?;
    let scores = tape.add_col(scores, tp.b_nvs)?;
    let pooled = tape.maxpool_cols(scores, None)?;
    let pos_weight = resolve_pos_weight(cfg.pos_weight, cfg.v_tgt, bow.n_pos())?;
    let z = nvs_normalizer(cfg.v_tgt, bow.n_pos(), pos_weight);
    tape.weighted_bce(pooled, bow.bits(), pos_weight, 1.0 / z)
}

/// Loss variables for one sentence. `enc_out` is the encoder output the
/// vocabulary head consumed; pass it to `Tape::backward` as a boundary to
/// keep that head's gradients out of the encoder.
pub struct SentenceForward {
    pub mt_loss: Var,
    pub nvs_loss: Var,
    pub enc_out: Var,
}

/// Builds the joint forward graph for one sentence pair.
pub fn sentence_forward(
    tape: &mut Tape,
    tp: &TapeParams,
    cfg: &ModelConfig,
    pair: &SentencePair,
    bow: &BowTarget,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<SentenceForward> {
    if pair.source.is_empty() || pair.target.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty sentence".into(),
        ));
    }
    if bow.vocab_size() != cfg.v_tgt {
        return Err(Error::Shape(format!(
            "bag-of-words over {} entries for a vocabulary of {}",
            bow.vocab_size(),
            cfg.v_tgt
        )));
    }
    let mut drop = Dropout {
        rng: dropout_rng,
        rate: cfg.dropout,
    };

    let enc_out = encoder_tape(tape, tp, cfg, &pair.source, &mut drop)?;
    let nvs_loss = nvs_loss_tape(tape, tp, cfg, enc_out, bow)?;

    let mut tgt_in = vec![BOS_ID];
    tgt_in.extend_from_slice(&pair.target[..pair.target.len() - 1]);
    let mut x = embed_tape(tape, tp.tgt_embed, &tgt_in, cfg.d_model, &mut drop)?;
    for layer in &tp.decoder {
        let xn = tape.layer_norm_cols(x, layer.ln_self.gain, layer.ln_self.bias)?;
        let a = attention_tape(tape, &layer.self_attn, xn, xn, cfg.n_heads, true)?;
        let a = drop.apply(tape, a)?;
        x = tape.add(x, a)?;
        let xn = tape.layer_norm_cols(x, layer.ln_cross.gain, layer.ln_cross.bias)?;
        let a = attention_tape(tape, &layer.cross_attn, xn, enc_out, cfg.n_heads, false)?;
        let a = drop.apply(tape, a)?;
        x = tape.add(x, a)?;
        let xn = tape.layer_norm_cols(x, layer.ln_ffn.gain, layer.ln_ffn.bias)?;
        let f = ffn_tape(tape, &layer.ffn, xn)?;
        let f = drop.apply(tape, f)?;
        x = tape.add(x, f)?;
    }
    let hd = tape.layer_norm_cols(x, tp.dec_final_ln.gain, tp.dec_final_ln.bias)?;
    let logits = tape.matmul(tp.w_out, hd)?;
    let logits = tape.add_col(logits, tp.b_out)?;
    let mt_loss = tape.ce_label_smooth(logits, &pair.target, cfg.label_smoothing)?;

    Ok(SentenceForward {
        mt_loss,
        nvs_loss,
        enc_out,
    })
}

/// Encoder and vocabulary-prediction head only; the cheap forward used
/// when nothing else is being updated.
pub fn sentence_nvs_forward(
    tape: &mut Tape,
    tp: &TapeParams,
    cfg: &ModelConfig,
    pair: &SentencePair,
    bow: &BowTarget,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<SentenceForward> {
    if pair.source.is_empty() {
        return Err(Error::InvalidInput(
            "cannot train on an empty sentence".into(),
        ));
    }
    if bow.vocab_size() != cfg.v_tgt {
        return Err(Error::Shape(format!(
            "bag-of-words over {} entries for a vocabulary of {}",
            bow.vocab_size(),
            cfg.v_tgt
        )));
    }
    let mut drop = Dropout {
        rng: dropout_rng,
        rate: cfg.dropout,
    };
    let enc_out = encoder_tape(tape, tp, cfg, &pair.source, &mut drop)?;
    let nvs_loss = nvs_loss_tape(tape, tp, cfg, enc_out, bow)?;
    Ok(SentenceForward {
        mt_loss: nvs_loss,
        nvs_loss,
        enc_out,
    })
}

/// Positive-class weight for one sentence's vocabulary prediction loss.
pub fn resolve_pos_weight(mode: PosWeightMode, v_tgt: usize, n_pos: usize) -> Result<f64> {
    match mode {
        PosWeightMode::Fixed(w) => Ok(w),
        PosWeightMode::Auto { strength } => {
            if n_pos == 0 {
                return Err(Error::InvalidInput(
                    "balanced positive weight needs at least one present token".into(),
                ));
            }
            Ok((strength * (v_tgt - n_pos) as f64 / n_pos as f64).max(1.0))
        }
    }
}

/// Normalizer that keeps the weighted loss on a per-vocabulary-entry
/// scale: the number of terms, counting each positive `pos_weight` times.
pub fn nvs_normalizer(v_tgt: usize, n_pos: usize, pos_weight: f64) -> f64 {
    v_tgt as f64 + (pos_weight - 1.0) * n_pos as f64
}
