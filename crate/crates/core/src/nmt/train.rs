//! Joint training and head-only fine-tuning.
//!
//! Batches are processed one sentence at a time on a shared tape and the
//! per-parameter gradients are summed in sentence order, so a fixed seed
//! reproduces training bit for bit. The translation loss always updates
//! the whole model; the vocabulary-prediction loss is cut off at the
//! encoder output unless explicitly unblocked.

use super::config::ModelConfig;
use super::losses::{register_params, sentence_forward, sentence_nvs_forward};
use super::params::{ModelParams, NVS_PREFIX};
use crate::corpus::{extract_bow, BowTarget, SentencePair};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, Tape};
use crate::rng::stage_rng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Which parameters an optimizer step may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateScope {
    All,
    /// Only the vocabulary-prediction head; everything else is frozen.
    NvsHeadOnly,
}

impl UpdateScope {
    fn allows(self, name: &str) -> bool {
        match self {
            UpdateScope::All => true,
            UpdateScope::NvsHeadOnly => name.starts_with(NVS_PREFIX),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Peak learning rate, reached after warm-up and held constant.
    pub lr: f64,
    pub warmup_steps: usize,
    pub seed: u64,
    /// Keep vocabulary-prediction gradients out of the encoder.
    pub block_nvs_encoder_grads: bool,
    pub scope: UpdateScope,
    /// Record a loss point every this many steps.
    pub log_every: usize,
}

impl TrainConfig {
    pub fn new(steps: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            steps,
            batch_size,
            lr: 3e-4,
            warmup_steps: 400,
            seed,
            block_nvs_encoder_grads: true,
            scope: UpdateScope::All,
            log_every: 50,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Batch boundary: summed target lengths stay at or under this.
    pub max_batch_tokens: usize,
    pub seed: u64,
    pub scope: UpdateScope,
}

impl FinetuneConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 10,
            lr: 1e-4,
            max_batch_tokens: 2048,
            seed,
            scope: UpdateScope::NvsHeadOnly,
        }
    }
}

/// One recorded loss measurement.
#[derive(Clone, Copy, Debug)]
pub struct LossPoint {
    pub step: usize,
    pub mt: f64,
    pub nvs: f64,
}

#[derive(Clone, Debug)]
pub struct TrainStats {
    pub steps_run: usize,
    pub history: Vec<LossPoint>,
    pub final_mt: f64,
    pub final_nvs: f64,
}

// ── Optimizer ───────────────────────────────────────────────────────────

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam moments, one pair of matrices per parameter array in canonical
/// order.
pub struct AdamState {
    m: Vec<DenseMatrix<f64>>,
    v: Vec<DenseMatrix<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams<f64>) -> Self {
        let shapes: Vec<(usize, usize)> = params.arrays().iter().map(|(_, a)| a.shape()).collect();
        Self {
            m: shapes
                .iter()
                .map(|&(r, c)| DenseMatrix::zeros(r, c))
                .collect(),
            v: shapes
                .iter()
                .map(|&(r, c)| DenseMatrix::zeros(r, c))
                .collect(),
            step: 0,
        }
    }

    /// Applies one update. `grads` is aligned with the canonical array
    /// order; `None` entries (losses that never reached the array) are
    /// treated as zero gradient.
    pub fn update(
        &mut self,
        params: &mut ModelParams<f64>,
        grads: &[Option<DenseMatrix<f64>>],
        lr: f64,
        scope: UpdateScope,
    ) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for (i, (name, array)) in params.arrays_mut().into_iter().enumerate() {
            if !scope.allows(&name) {
                continue;
            }
            let Some(g) = &grads[i] else { continue };
            if g.shape() != array.shape() {
                return Err(Error::Shape(format!("gradient shape mismatch for {name}")));
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let theta = array.data_mut();
            for (j, &gj) in g.data().iter().enumerate() {
                let mj = ADAM_BETA1 * m.data()[j] + (1.0 - ADAM_BETA1) * gj;
                let vj = ADAM_BETA2 * v.data()[j] + (1.0 - ADAM_BETA2) * gj * gj;
                m.data_mut()[j] = mj;
                v.data_mut()[j] = vj;
                theta[j] -= lr * (mj / bc1) / ((vj / bc2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

fn lr_at(peak: f64, warmup: usize, step: usize) -> f64 {
    if warmup == 0 {
        peak
    } else {
        peak * (((step + 1) as f64 / warmup as f64).min(1.0))
    }
}

fn bows_for(pairs: &[SentencePair], v_tgt: usize) -> Result<Vec<BowTarget>> {
    pairs.iter().map(|p| extract_bow(p, v_tgt)).collect()
}

/// Runs one optimization step over the given sentences. Returns the mean
/// losses of the batch.
#[allow(clippy::too_many_arguments)]
fn run_batch(
    params: &mut ModelParams<f64>,
    cfg: &ModelConfig,
    batch: &[(usize, &SentencePair, &BowTarget)],
    adam: &mut AdamState,
    lr: f64,
    scope: UpdateScope,
    block: bool,
    dropout_rng: &mut rand_chacha::ChaCha8Rng,
    step: usize,
) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let tp = register_params(&mut tape, params);
    let inv_batch = 1.0 / batch.len() as f64;
    let mut mt_total = 0.0;
    let mut nvs_total = 0.0;
    let nvs_only = scope == UpdateScope::NvsHeadOnly;
    for &(_, pair, bow) in batch {
        let fwd = if nvs_only {
            // Frozen trunk: the decoder would only produce gradients that
            // get thrown away, so skip building it.
            sentence_nvs_forward(&mut tape, &tp, cfg, pair, bow, Some(dropout_rng))?
        } else {
            sentence_forward(&mut tape, &tp, cfg, pair, bow, Some(dropout_rng))?
        };
        let nvs_scaled = tape.scale(fwd.nvs_loss, inv_batch);
        let boundary = if block || nvs_only {
            vec![fwd.enc_out]
        } else {
            vec![]
        };
        tape.backward(nvs_scaled, &boundary)?;
        nvs_total += tape.scalar(nvs_scaled);
        if !nvs_only {
            let mt_scaled = tape.scale(fwd.mt_loss, inv_batch);
            tape.backward(mt_scaled, &[])?;
            mt_total += tape.scalar(mt_scaled);
        }
    }
    if !(mt_total.is_finite() && nvs_total.is_finite()) {
        return Err(Error::Diverged {
            step,
            msg: format!("batch loss mt={mt_total} nvs={nvs_total}"),
        });
    }
    let grads: Vec<Option<DenseMatrix<f64>>> = tp
        .ordered()
        .iter()
        .map(|&(ref name, var)| {
            if scope.allows(name) {
                tape.grad(var).cloned()
            } else {
                None
            }
        })
        .collect();
    adam.update(params, &grads, lr, scope)?;
    Ok((mt_total, nvs_total))
}

/// Joint training with randomly sampled batches.
pub fn train(
    params: &mut ModelParams<f64>,
    pairs: &[SentencePair],
    tc: &TrainConfig,
) -> Result<TrainStats> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no training data".into()));
    }
    if tc.batch_size == 0 || tc.steps == 0 {
        return Err(Error::InvalidInput(
            "steps and batch size must be positive".into(),
        ));
    }
    let cfg = params.cfg.clone();
    cfg.validate()?;
    let bows = bows_for(pairs, cfg.v_tgt)?;
    let mut batch_rng = stage_rng(tc.seed, "train-batches");
    let mut dropout_rng = stage_rng(tc.seed, "train-dropout");
    let mut adam = AdamState::new(params);
    let mut history = Vec::new();
    let mut last = (f64::NAN, f64::NAN);
    for step in 0..tc.steps {
        let batch: Vec<(usize, &SentencePair, &BowTarget)> = (0..tc.batch_size)
            .map(|_| {
                let i = batch_rng.gen_range(0..pairs.len());
                (i, &pairs[i], &bows[i])
            })
            .collect();
        let lr = lr_at(tc.lr, tc.warmup_steps, step);
        last = run_batch(
            params,
            &cfg,
            &batch,
            &mut adam,
            lr,
            tc.scope,
            tc.block_nvs_encoder_grads,
            &mut dropout_rng,
            step,
        )?;
        if step % tc.log_every.max(1) == 0 || step + 1 == tc.steps {
            log::debug!(
                "step {step}: mt {:.4} nvs {:.6} lr {lr:.2e}",
                last.0,
                last.1
            );
            history.push(LossPoint {
                step,
                mt: last.0,
                nvs: last.1,
            });
        }
    }
    Ok(TrainStats {
        steps_run: tc.steps,
        history,
        final_mt: last.0,
        final_nvs: last.1,
    })
}

/// Epoch-based pass over adaptation data, by default touching only the
/// vocabulary-prediction head.
pub fn finetune(
    params: &mut ModelParams<f64>,
    pairs: &[SentencePair],
    fc: &FinetuneConfig,
) -> Result<TrainStats> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no adaptation data".into()));
    }
    if fc.epochs == 0 || fc.max_batch_tokens == 0 {
        return Err(Error::InvalidInput(
            "epochs and batch budget must be positive".into(),
        ));
    }
    let cfg = params.cfg.clone();
    let bows = bows_for(pairs, cfg.v_tgt)?;
    let mut order_rng = stage_rng(fc.seed, "finetune-order");
    let mut dropout_rng = stage_rng(fc.seed, "finetune-dropout");
    let mut adam = AdamState::new(params);
    let mut history = Vec::new();
    let mut last = (f64::NAN, f64::NAN);
    let mut step = 0;
    for epoch in 0..fc.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut order_rng);
        let mut cursor = 0;
        while cursor < order.len() {
            let mut batch = Vec::new();
            let mut tokens = 0;
            while cursor < order.len() {
                let i = order[cursor];
                let t = pairs[i].target.len();
                if !batch.is_empty() && tokens + t > fc.max_batch_tokens {
                    break;
                }
                batch.push((i, &pairs[i], &bows[i]));
                tokens += t;
                cursor += 1;
            }
            last = run_batch(
                params,
                &cfg,
                &batch,
                &mut adam,
                fc.lr,
                fc.scope,
                true,
                &mut dropout_rng,
                step,
            )?;
            step += 1;
        }
        log::debug!("epoch {epoch}: mt {:.4} nvs {:.6}", last.0, last.1);
        history.push(LossPoint {
            step,
            mt: last.0,
            nvs: last.1,
        });
    }
    Ok(TrainStats {
        steps_run: step,
        history,
        final_mt: last.0,
        final_nvs: last.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EOS_ID;
    use crate::nmt::config::ModelConfig;

    fn tiny_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::small(10, 12);
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.d_ffn = 16;
        cfg.enc_layers = 1;
        cfg.dec_layers = 1;
        cfg
    }

    fn tiny_data() -> Vec<SentencePair> {
        // A fixed mapping task: targets are sources shifted by one id.
        (0..6u32)
            .map(|i| {
                let a = 4 + (i % 5);
                let b = 4 + ((i + 2) % 5);
                SentencePair::new(vec![a, b], vec![b + 1, a + 1, EOS_ID])
            })
            .collect()
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let cfg = tiny_cfg();
        let data = tiny_data();
        let tc = TrainConfig {
            warmup_steps: 2,
            log_every: 1,
            ..TrainConfig::new(4, 3, 9)
        };
        let mut a = ModelParams::init(cfg.clone(), 1).unwrap();
        train(&mut a, &data, &tc).unwrap();
        let mut b = ModelParams::init(cfg, 1).unwrap();
        train(&mut b, &data, &tc).unwrap();
        assert_eq!(a, b, "same seed must reproduce parameters exactly");
    }

    #[test]
    fn losses_fall_on_a_learnable_task() {
        let mut cfg = tiny_cfg();
        cfg.dropout = 0.0;
        let data = tiny_data();
        let mut params = ModelParams::init(cfg, 2).unwrap();
        let tc = TrainConfig {
            lr: 3e-3,
            warmup_steps: 10,
            log_every: 1,
            ..TrainConfig::new(60, 6, 3)
        };
        let stats = train(&mut params, &data, &tc).unwrap();
        let first = &stats.history[0];
        assert!(
            stats.final_mt < first.mt * 0.7,
            "translation loss {} -> {}",
            first.mt,
            stats.final_mt
        );
        assert!(
            stats.final_nvs < first.nvs * 0.7,
            "vocabulary loss {} -> {}",
            first.nvs,
            stats.final_nvs
        );
    }

    #[test]
    fn head_only_scope_freezes_everything_else() {
        let cfg = tiny_cfg();
        let data = tiny_data();
        let mut params = ModelParams::init(cfg, 4).unwrap();
        let before = params.clone();
        let fc = FinetuneConfig {
            epochs: 2,
            max_batch_tokens: 8,
            ..FinetuneConfig::new(7)
        };
        let stats = finetune(&mut params, &data, &fc).unwrap();
        assert!(stats.steps_run > 0);
        for ((name, a), (_, b)) in before.arrays().iter().zip(params.arrays().iter()) {
            if name.starts_with(NVS_PREFIX) {
                assert_ne!(a, b, "{name} should move");
            } else {
                assert_eq!(a, b, "{name} must stay frozen");
            }
        }
    }

    #[test]
    fn token_budget_shapes_batches() {
        // Every target here is 3 tokens; a budget of 7 gives batches of 2
        // except a final remainder, and any budget below one sentence
        // still makes singleton batches.
        let cfg = tiny_cfg();
        let data = tiny_data();
        let mut params = ModelParams::init(cfg, 4).unwrap();
        let fc = FinetuneConfig {
            epochs: 1,
            max_batch_tokens: 7,
            ..FinetuneConfig::new(7)
        };
        let stats = finetune(&mut params, &data, &fc).unwrap();
        assert_eq!(stats.steps_run, 3, "6 sentences over 2-sentence batches");
        let mut params = ModelParams::init(tiny_cfg(), 4).unwrap();
        let fc = FinetuneConfig {
            epochs: 1,
            max_batch_tokens: 1,
            ..FinetuneConfig::new(7)
        };
        let stats = finetune(&mut params, &data, &fc).unwrap();
        assert_eq!(
            stats.steps_run, 6,
            "budget below one sentence still progresses"
        );
    }

    #[test]
    fn poisoned_parameters_report_divergence() {
        let cfg = tiny_cfg();
        let data = tiny_data();
        let mut params = ModelParams::init(cfg, 5).unwrap();
        params.w_out.data_mut()[0] = f64::NAN;
        let tc = TrainConfig::new(2, 2, 1);
        match train(&mut params, &data, &tc) {
            Err(Error::Diverged { step, .. }) => assert_eq!(step, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn warmup_ramps_linearly_then_holds() {
        assert_eq!(lr_at(4e-4, 4, 0), 1e-4);
        assert_eq!(lr_at(4e-4, 4, 1), 2e-4);
        assert_eq!(lr_at(4e-4, 4, 3), 4e-4);
        assert_eq!(lr_at(4e-4, 4, 100), 4e-4);
        assert_eq!(lr_at(3e-4, 0, 0), 3e-4);
    }
}
