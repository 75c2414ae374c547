//! Forward passes for inference, generic over float width.
//!
//! Sequences are held as matrices with one column per position. The
//! encoder processes a whole sentence at once; the decoder runs one
//! position at a time against cached keys and values so beam search never
//! recomputes earlier positions. A full-sequence teacher-forced decoder
//! pass exists for parity checks against the incremental path.

use super::params::{AttentionParams, LayerNormParams, ModelParams};
use crate::corpus::EOS_ID;
use crate::error::{Error, Result};
use crate::numerics::{dot, layer_norm_cols, maxpool_cols, row_softmax, sigmoid, softmax};
use crate::numerics::{DenseMatrix, Real};
use std::rc::Rc;

/// Additive mask value for forbidden attention links. Large but finite,
/// so softmax never sees infinity arithmetic.
pub(crate) const MASK_NEG: f64 = -1e30;

/// Appends the sentence-end id; encoder input always carries it.
pub fn with_eos(src: &[u32]) -> Vec<u32> {
    let mut ids = src.to_vec();
    ids.push(EOS_ID);
    ids
}

/// Sinusoidal position table, width-by-length: column `p` encodes
/// position `p`.
pub fn positional_encoding<T: Real>(d: usize, len: usize) -> DenseMatrix<T> {
    DenseMatrix::from_fn(d, len, |i, pos| {
        let exponent = 2.0 * (i / 2) as f64 / d as f64;
        let angle = pos as f64 / 10_000f64.powf(exponent);
        T::from_f64(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

fn positional_column<T: Real>(d: usize, pos: usize) -> Vec<T> {
    (0..d)
        .map(|i| {
            let exponent = 2.0 * (i / 2) as f64 / d as f64;
            let angle = pos as f64 / 10_000f64.powf(exponent);
            T::from_f64(if i % 2 == 0 { angle.sin() } else { angle.cos() })
        })
        .collect()
}

fn gather_embed<T: Real>(table: &DenseMatrix<T>, ids: &[u32]) -> Result<DenseMatrix<T>> {
    let (v, d) = table.shape();
    if let Some(&bad) = ids.iter().find(|&&i| i as usize >= v) {
        return Err(Error::InvalidInput(format!(
            "token id {bad} outside vocabulary of {v}"
        )));
    }
    Ok(DenseMatrix::from_fn(d, ids.len(), |i, j| {
        table[(ids[j] as usize, i)]
    }))
}

fn embed_sequence<T: Real>(
    table: &DenseMatrix<T>,
    ids: &[u32],
    d: usize,
) -> Result<DenseMatrix<T>> {
    let scaled = gather_embed(table, ids)?.scale(T::from_f64((d as f64).sqrt()));
    scaled.add(&positional_encoding(d, ids.len()))
}

/// Multi-head attention, full-sequence form. Queries come from `xq`,
/// keys and values from `xkv`; `causal` hides later key columns from
/// earlier query columns.
fn attention_full<T: Real>(
    p: &AttentionParams<T>,
    xq: &DenseMatrix<T>,
    xkv: &DenseMatrix<T>,
    n_heads: usize,
    causal: bool,
) -> Result<DenseMatrix<T>> {
    let q = p.wq.matmul(xq)?;
    let k = p.wk.matmul(xkv)?;
    let v = p.wv.matmul(xkv)?;
    let dh = q.rows() / n_heads;
    let inv_sqrt = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = q.slice_rows(h * dh, dh)?;
        let kh = k.slice_rows(h * dh, dh)?;
        let vh = v.slice_rows(h * dh, dh)?;
        let mut scores = qh.matmul_ta(&kh)?.scale(inv_sqrt);
        if causal {
            for i in 0..scores.rows() {
                for j in (i + 1)..scores.cols() {
                    scores[(i, j)] = scores[(i, j)] + T::from_f64(MASK_NEG);
                }
            }
        }
        let attn = row_softmax(&scores)?;
        heads.push(vh.matmul_tb(&attn)?);
    }
    let refs: Vec<&DenseMatrix<T>> = heads.iter().collect();
    p.wo.matmul(&DenseMatrix::vcat(&refs)?)
}

fn ffn_full<T: Real>(
    p: &super::params::FfnParams<T>,
    x: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    let h =
        p.w1.matmul(x)?
            .add_col_broadcast(&p.b1)?
            .map(crate::numerics::gelu);
    p.w2.matmul(&h)?.add_col_broadcast(&p.b2)
}

fn ln<T: Real>(p: &LayerNormParams<T>, x: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    layer_norm_cols(x, &p.gain, &p.bias)
}

/// Final encoder output for one sentence, width-by-positions. The last
/// column belongs to the appended sentence-end token.
#[derive(Clone, Debug)]
pub struct EncoderStates<T: Real> {
    pub h: DenseMatrix<T>,
}

impl<T: Real> EncoderStates<T> {
    /// Wraps raw states; useful for driving downstream stages with
    /// hand-built inputs.
    pub fn from_states(h: DenseMatrix<T>) -> Self {
        Self { h }
    }

    pub fn len(&self) -> usize {
        self.h.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.h.cols() == 0
    }
}

/// Encodes source token ids (without the sentence-end marker; it is
/// appended here).
pub fn encode<T: Real>(p: &ModelParams<T>, src: &[u32]) -> Result<EncoderStates<T>> {
    if src.is_empty() {
        return Err(Error::InvalidInput(
            "cannot encode an empty sentence".into(),
        ));
    }
    let ids = with_eos(src);
    let mut x = embed_sequence(&p.src_embed, &ids, p.cfg.d_model)?;
    for layer in &p.encoder {
        let xn = ln(&layer.ln_attn, &x)?;
        x = x.add(&attention_full(
            &layer.attn,
            &xn,
            &xn,
            p.cfg.n_heads,
            false,
        )?)?;
        let xn = ln(&layer.ln_ffn, &x)?;
        x = x.add(&ffn_full(&layer.ffn, &xn)?)?;
    }
    Ok(EncoderStates {
        h: ln(&p.enc_final_ln, &x)?,
    })
}

/// Per-vocabulary-entry presence probabilities: sigmoid of the column-wise
/// max of the prediction head's scores.
pub fn nvs_scores<T: Real>(p: &ModelParams<T>, enc: &EncoderStates<T>) -> Result<Vec<T>> {
    let scores = p.w_nvs.matmul(&enc.h)?.add_col_broadcast(&p.b_nvs)?;
    let (pooled, _) = maxpool_cols(&scores, None)?;
    Ok(pooled.data().iter().map(|&s| sigmoid(s)).collect())
}

// ── Incremental decoding ────────────────────────────────────────────────

#[derive(Clone, Debug)]
struct LayerCache<T: Real> {
    /// Self-attention keys and values, one row of width `d` per consumed
    /// position.
    self_k: Vec<T>,
    self_v: Vec<T>,
    /// Cross-attention keys and values over the source; shared between
    /// clones because every hypothesis of a sentence uses the same ones.
    cross_k: Rc<Vec<T>>,
    cross_v: Rc<Vec<T>>,
}

/// Decoder state for one hypothesis. Cloning is cheap enough for beam
/// reordering: source-side caches are shared, target-side caches copy.
#[derive(Clone, Debug)]
pub struct DecoderCaches<T: Real> {
    layers: Vec<LayerCache<T>>,
    len: usize,
}

impl<T: Real> DecoderCaches<T> {
    /// Number of target positions consumed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Transposed projection of encoder states: row per source position.
fn project_rows<T: Real>(w: &DenseMatrix<T>, h: &DenseMatrix<T>) -> Result<Vec<T>> {
    let proj = w.matmul(h)?;
    let (d, t) = proj.shape();
    let mut rows = Vec::with_capacity(d * t);
    for j in 0..t {
        for i in 0..d {
            rows.push(proj[(i, j)]);
        }
    }
    Ok(rows)
}

/// Prepares per-layer caches for decoding one sentence: cross-attention
/// keys and values are computed here, once.
pub fn start_decoder<T: Real>(
    p: &ModelParams<T>,
    enc: &EncoderStates<T>,
) -> Result<DecoderCaches<T>> {
    let mut layers = Vec::with_capacity(p.decoder.len());
    for layer in &p.decoder {
        layers.push(LayerCache {
            self_k: Vec::new(),
            self_v: Vec::new(),
            cross_k: Rc::new(project_rows(&layer.cross_attn.wk, &enc.h)?),
            cross_v: Rc::new(project_rows(&layer.cross_attn.wv, &enc.h)?),
        });
    }
    Ok(DecoderCaches { layers, len: 0 })
}

fn matvec<T: Real>(w: &DenseMatrix<T>, x: &[T]) -> Vec<T> {
    (0..w.rows()).map(|r| dot(w.row(r), x)).collect()
}

fn ln_vec<T: Real>(p: &LayerNormParams<T>, x: &[T]) -> Vec<T> {
    let d = x.len();
    let df = T::from_f64(d as f64);
    let mut mean = T::zero();
    for &v in x {
        mean = mean + v;
    }
    mean = mean / df;
    let mut var = T::zero();
    for &v in x {
        let c = v - mean;
        var = var + c * c;
    }
    var = var / df;
    let inv_std = T::one() / (var + T::from_f64(crate::numerics::LAYER_NORM_EPS)).sqrt();
    (0..d)
        .map(|i| p.gain[(i, 0)] * ((x[i] - mean) * inv_std) + p.bias[(i, 0)])
        .collect()
}

/// Attention of a single query against cached key/value rows.
fn attend_cached<T: Real>(q: &[T], keys: &[T], values: &[T], n_heads: usize) -> Result<Vec<T>> {
    let d = q.len();
    let positions = keys.len() / d;
    if positions == 0 {
        return Err(Error::InvalidInput("attention over an empty cache".into()));
    }
    let dh = d / n_heads;
    let inv_sqrt = T::from_f64(1.0 / (dh as f64).sqrt());
    let mut out = vec![T::zero(); d];
    for h in 0..n_heads {
        let lo = h * dh;
        let hi = lo + dh;
        let scores: Vec<T> = (0..positions)
            .map(|j| dot(&q[lo..hi], &keys[j * d + lo..j * d + hi]) * inv_sqrt)
            .collect();
        let attn = softmax(&scores)?;
        for (j, &a) in attn.iter().enumerate() {
            let vrow = &values[j * d + lo..j * d + hi];
            for (o, &v) in out[lo..hi].iter_mut().zip(vrow) {
                *o = *o + a * v;
            }
        }
    }
    Ok(out)
}

fn add_in_place<T: Real>(x: &mut [T], y: &[T]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a = *a + *b;
    }
}

/// Feeds one target token into the decoder and returns the final hidden
/// column for the next-token distribution. The caller applies an output
/// projection (full or restricted) to turn it into logits.
pub fn decode_step<T: Real>(
    p: &ModelParams<T>,
    caches: &mut DecoderCaches<T>,
    token: u32,
) -> Result<Vec<T>> {
    let d = p.cfg.d_model;
    let pos = caches.len;
    if pos + 1 > p.cfg.max_len {
        return Err(Error::InvalidInput(format!(
            "decoder position {pos} exceeds the positional table of {}",
            p.cfg.max_len
        )));
    }
    if token as usize >= p.cfg.v_tgt {
        return Err(Error::InvalidInput(format!(
            "token id {token} outside target vocabulary"
        )));
    }
    let sqrt_d = T::from_f64((d as f64).sqrt());
    let pe = positional_column::<T>(d, pos);
    let mut x: Vec<T> = p
        .tgt_embed
        .row(token as usize)
        .iter()
        .zip(&pe)
        .map(|(&e, &pc)| e * sqrt_d + pc)
        .collect();

    for (layer, cache) in p.decoder.iter().zip(&mut caches.layers) {
        let xn = ln_vec(&layer.ln_self, &x);
        let q = matvec(&layer.self_attn.wq, &xn);
        cache.self_k.extend(matvec(&layer.self_attn.wk, &xn));
        cache.self_v.extend(matvec(&layer.self_attn.wv, &xn));
        let attended = attend_cached(&q, &cache.self_k, &cache.self_v, p.cfg.n_heads)?;
        add_in_place(&mut x, &matvec(&layer.self_attn.wo, &attended));

        let xn = ln_vec(&layer.ln_cross, &x);
        let q = matvec(&layer.cross_attn.wq, &xn);
        let attended = attend_cached(&q, &cache.cross_k, &cache.cross_v, p.cfg.n_heads)?;
        add_in_place(&mut x, &matvec(&layer.cross_attn.wo, &attended));

        let xn = ln_vec(&layer.ln_ffn, &x);
        let mut h = matvec(&layer.ffn.w1, &xn);
        for (i, v) in h.iter_mut().enumerate() {
            *v = crate::numerics::gelu(*v + layer.ffn.b1[(i, 0)]);
        }
        let mut f = matvec(&layer.ffn.w2, &h);
        for (i, v) in f.iter_mut().enumerate() {
            *v = *v + layer.ffn.b2[(i, 0)];
        }
        add_in_place(&mut x, &f);
    }
    caches.len += 1;
    Ok(ln_vec(&p.dec_final_ln, &x))
}

/// Full-sequence decoder pass with the reference (already shifted) input
/// ids. Returns final hidden states, width-by-positions. Used to check
/// the incremental path and by loss evaluation outside training.
pub fn decode_teacher_forced<T: Real>(
    p: &ModelParams<T>,
    enc: &EncoderStates<T>,
    tgt_in: &[u32],
) -> Result<DenseMatrix<T>> {
    if tgt_in.is_empty() {
        return Err(Error::InvalidInput("decoder input is empty".into()));
    }
    let mut x = embed_sequence(&p.tgt_embed, tgt_in, p.cfg.d_model)?;
    for layer in &p.decoder {
        let xn = ln(&layer.ln_self, &x)?;
        x = x.add(&attention_full(
            &layer.self_attn,
            &xn,
            &xn,
            p.cfg.n_heads,
            true,
        )?)?;
        let xn = ln(&layer.ln_cross, &x)?;
        x = x.add(&attention_full(
            &layer.cross_attn,
            &xn,
            &enc.h,
            p.cfg.n_heads,
            false,
        )?)?;
        let xn = ln(&layer.ln_ffn, &x)?;
        x = x.add(&ffn_full(&layer.ffn, &xn)?)?;
    }
    ln(&p.dec_final_ln, &x)
}

/// Logits over the full target vocabulary for one hidden column.
pub fn full_logits<T: Real>(p: &ModelParams<T>, hidden: &[T]) -> Vec<T> {
    let mut out = matvec(&p.w_out, hidden);
    for (i, v) in out.iter_mut().enumerate() {
        *v = *v + p.b_out[(i, 0)];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::BOS_ID;
    use crate::nmt::config::ModelConfig;

    fn tiny_params() -> ModelParams<f64> {
        let mut cfg = ModelConfig::small(10, 12);
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.d_ffn = 16;
        cfg.enc_layers = 2;
        cfg.dec_layers = 2;
        ModelParams::init(cfg, 42).unwrap()
    }

    #[test]
    fn positional_encoding_matches_definition() {
        let pe = positional_encoding::<f64>(4, 3);
        assert_eq!(pe[(0, 0)], 0.0);
        assert_eq!(pe[(1, 0)], 1.0);
        assert!((pe[(0, 2)] - 2f64.sin()).abs() < 1e-15);
        assert!((pe[(2, 1)] - (1.0 / 10_000f64.powf(0.5)).sin()).abs() < 1e-15);
        assert!((pe[(3, 1)] - (1.0 / 10_000f64.powf(0.5)).cos()).abs() < 1e-15);
    }

    #[test]
    fn encode_appends_end_marker_and_is_deterministic() {
        let p = tiny_params();
        let enc = encode(&p, &[4, 5, 6]).unwrap();
        assert_eq!(enc.len(), 4, "three tokens plus the end marker");
        let again = encode(&p, &[4, 5, 6]).unwrap();
        assert_eq!(enc.h, again.h);
        assert!(encode(&p, &[]).is_err());
    }

    #[test]
    fn nvs_scores_are_probabilities() {
        let p = tiny_params();
        let enc = encode(&p, &[4, 5, 6]).unwrap();
        let z = nvs_scores(&p, &enc).unwrap();
        assert_eq!(z.len(), 12);
        assert!(z.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn incremental_decoding_matches_teacher_forced() {
        let p = tiny_params();
        let enc = encode(&p, &[4, 5, 6, 7]).unwrap();
        let tgt_in = [BOS_ID, 5, 9, 4];
        let full = decode_teacher_forced(&p, &enc, &tgt_in).unwrap();
        let mut caches = start_decoder(&p, &enc).unwrap();
        for (j, &tok) in tgt_in.iter().enumerate() {
            let h = decode_step(&p, &mut caches, tok).unwrap();
            for i in 0..p.cfg.d_model {
                let a = full[(i, j)];
                let b = h[i];
                assert!(
                    (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                    "position {j} dim {i}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn causal_mask_blocks_future_positions() {
        // Changing a later input token must not affect earlier hidden
        // columns in the teacher-forced pass.
        let p = tiny_params();
        let enc = encode(&p, &[4, 5]).unwrap();
        let a = decode_teacher_forced(&p, &enc, &[BOS_ID, 5, 6]).unwrap();
        let b = decode_teacher_forced(&p, &enc, &[BOS_ID, 5, 9]).unwrap();
        for j in 0..2 {
            for i in 0..p.cfg.d_model {
                assert_eq!(a[(i, j)], b[(i, j)], "column {j} saw a future token");
            }
        }
        assert_ne!(a.col_to_vec(2), b.col_to_vec(2));
    }

    #[test]
    fn f32_inference_tracks_f64() {
        let p = tiny_params();
        let p32: ModelParams<f32> = p.cast();
        let e64 = encode(&p, &[4, 5, 6]).unwrap();
        let e32 = encode(&p32, &[4, 5, 6]).unwrap();
        for i in 0..e64.h.rows() {
            for j in 0..e64.h.cols() {
                let a = e64.h[(i, j)];
                let b = e32.h[(i, j)] as f64;
                assert!((a - b).abs() < 1e-4 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
        let z64 = nvs_scores(&p, &e64).unwrap();
        let z32 = nvs_scores(&p32, &e32).unwrap();
        for (a, b) in z64.iter().zip(&z32) {
            assert!((a - *b as f64).abs() < 1e-3);
        }
    }

    #[test]
    fn decode_step_respects_position_limit() {
        let mut p = tiny_params();
        p.cfg.max_len = 2;
        let enc = encode(&p, &[4]).unwrap();
        let mut caches = start_decoder(&p, &enc).unwrap();
        assert!(decode_step(&p, &mut caches, BOS_ID).is_ok());
        assert!(decode_step(&p, &mut caches, 5).is_ok());
        assert!(decode_step(&p, &mut caches, 6).is_err());
    }
}
