//! Acceptance battery: one test per release criterion, each ending in a
//! single machine-greppable verdict line. Criteria that need a fully
//! trained model share one fixture (trained once, ~20 minutes); the
//! rest run on purpose-built tiny models in seconds.
//!
//! `cargo test -p shortlex-core --test acceptance -- --nocapture`

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shortlex_core::aligner::{
    adapt_align, em_train, extract_lexicon, AlignConfig, TranslationLexicon,
};
use shortlex_core::bench::{
    avg_vocab_size, context_compare, corpus_bleu, corpus_recall, k_grid, lambda_grid, sweep_align,
    sweep_nvs, time_decode, Averaging, EvalItem, RecallScope,
};
use shortlex_core::corpus::{detokenize, extract_bow, BowTarget, SentencePair, EOS_ID};
use shortlex_core::decode::{translate_sentence, SelectorSpec};
use shortlex_core::nmt::{
    encode, finetune, inspect_checkpoint, lexicon_entry_count, nvs_float_count, nvs_normalizer,
    nvs_scores, register_params, resolve_pos_weight, save_checkpoint, sentence_forward,
    sentence_nvs_forward, train, FinetuneConfig, ModelConfig, ModelParams, PosWeightMode,
    TapeParams, TrainConfig,
};
use shortlex_core::numerics::{log_softmax, Tape, Var};
use shortlex_core::selection::{select_align, select_nvs, BagOfWords};
use shortlex_core::synthetic::{generate, SyntheticConfig, SyntheticTask};
use std::sync::OnceLock;
use std::time::Instant;

// ── Reporting ───────────────────────────────────────────────────────────

fn verdict(n: usize, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n:02} {name}: {tag}  [{detail}]");
    assert!(pass, "criterion {n:02} {name}: FAIL  [{detail}]");
}

// ── Shared trained fixture ──────────────────────────────────────────────

struct Fixture {
    task: SyntheticTask,
    params: ModelParams<f64>,
    lexicon: TranslationLexicon,
    align_cfg: AlignConfig,
    steps_run: usize,
    train_secs: f64,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let task = generate(&SyntheticConfig::default()).unwrap();
        let v = task.vocab_size();
        let mut params = ModelParams::init(ModelConfig::small(v, v), 17).unwrap();
        let t0 = Instant::now();
        let stats = train(&mut params, &task.train, &TrainConfig::new(20_000, 16, 17)).unwrap();
        let train_secs = t0.elapsed().as_secs_f64();
        let align_cfg = AlignConfig {
            iterations: 5,
            diagonal_tension: 0.0,
        };
        let (amodel, _) = em_train(&task.train, v, v, &align_cfg).unwrap();
        let lexicon = extract_lexicon(&amodel, 16).unwrap();
        Fixture {
            task,
            params,
            lexicon,
            align_cfg,
            steps_run: stats.steps_run,
            train_secs,
        }
    })
}

fn nvs_bows(params: &ModelParams<f64>, items: &[EvalItem], lambda: f64) -> Vec<BagOfWords> {
    items
        .iter()
        .map(|it| {
            let enc = encode(params, &it.source).unwrap();
            select_nvs(&nvs_scores(params, &enc).unwrap(), lambda).unwrap()
        })
        .collect()
}

fn span_recall(params: &ModelParams<f64>, items: &[EvalItem], lambda: f64) -> f64 {
    let bows = nvs_bows(params, items, lambda);
    corpus_recall(&bows, items, RecallScope::Span, Averaging::Macro).unwrap()
}

// ── Tiny random models ──────────────────────────────────────────────────

fn tiny_model(s: usize) -> (ModelConfig, ModelParams<f64>, SentencePair, BowTarget) {
    let mut rng = ChaCha8Rng::seed_from_u64(910 + s as u64);
    let v = rng.gen_range(10..=20usize);
    let mut cfg = ModelConfig::small(v, v);
    cfg.d_model = if s % 2 == 0 { 8 } else { 4 };
    cfg.n_heads = 2;
    cfg.d_ffn = if s % 2 == 0 { 16 } else { 8 };
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.dropout = 0.0;
    cfg.pos_weight = match s % 4 {
        0 => PosWeightMode::Fixed(1.0),
        1 => PosWeightMode::Fixed(1000.0),
        2 => PosWeightMode::Auto { strength: 0.55 },
        _ => PosWeightMode::Auto { strength: 2.0 },
    };
    let params = ModelParams::init(cfg.clone(), 1000 + s as u64).unwrap();
    let src: Vec<u32> = (0..rng.gen_range(2..=5))
        .map(|_| rng.gen_range(4..v as u32))
        .collect();
    let mut tgt: Vec<u32> = (0..rng.gen_range(2..=5))
        .map(|_| rng.gen_range(4..v as u32))
        .collect();
    tgt.push(EOS_ID);
    let pair = SentencePair::new(src, tgt);
    let bow = extract_bow(&pair, v).unwrap();
    (cfg, params, pair, bow)
}

// ── Criterion 1: gradient fidelity ──────────────────────────────────────

fn grads_of(tape: &mut Tape, tp: &TapeParams, loss: Var) -> Vec<Option<Vec<f64>>> {
    tape.clear_grads();
    tape.backward(loss, &[]).unwrap();
    tp.ordered()
        .iter()
        .map(|&(_, v)| tape.grad(v).map(|m| m.data().to_vec()))
        .collect()
}

#[test]
fn criterion_01_gradient_fidelity() {
    let t0 = Instant::now();
    let h = 1e-4;
    let mut worst = 0.0f64;
    for s in 0..20 {
        let (cfg, params, pair, bow) = tiny_model(s);
        let loss_at = |p: &ModelParams<f64>| -> (f64, f64) {
            let mut tape = Tape::new();
            let tp = register_params(&mut tape, p);
            let fwd = sentence_forward(&mut tape, &tp, &cfg, &pair, &bow, None).unwrap();
            (tape.scalar(fwd.mt_loss), tape.scalar(fwd.nvs_loss))
        };
        let mut tape = Tape::new();
        let tp = register_params(&mut tape, &params);
        let fwd = sentence_forward(&mut tape, &tp, &cfg, &pair, &bow, None).unwrap();
        let joint = tape.add(fwd.mt_loss, fwd.nvs_loss).unwrap();
        let g_mt = grads_of(&mut tape, &tp, fwd.mt_loss);
        let g_nvs = grads_of(&mut tape, &tp, fwd.nvs_loss);
        let g_joint = grads_of(&mut tape, &tp, joint);

        let n_arrays = params.arrays().len();
        for ai in 0..n_arrays {
            let count = {
                let (_, m) = &params.arrays()[ai];
                m.rows() * m.cols()
            };
            for probe in 0..2usize {
                let idx = (probe * 977 + 13) % count;
                let mut up = params.clone();
                up.arrays_mut()[ai].1.data_mut()[idx] += h;
                let (mt_p, nvs_p) = loss_at(&up);
                let mut down = params.clone();
                down.arrays_mut()[ai].1.data_mut()[idx] -= h;
                let (mt_m, nvs_m) = loss_at(&down);
                let fd = [
                    (mt_p - mt_m) / (2.0 * h),
                    (nvs_p - nvs_m) / (2.0 * h),
                    ((mt_p + nvs_p) - (mt_m + nvs_m)) / (2.0 * h),
                ];
                let an = [&g_mt, &g_nvs, &g_joint].map(|g| g[ai].as_ref().map_or(0.0, |v| v[idx]));
                for (a, f) in an.iter().zip(&fd) {
                    let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-3);
                    worst = worst.max(rel);
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        1,
        "gradient fidelity",
        worst < 1e-4 && secs < 60.0,
        &format!("worst relative error {worst:.2e} over 20 models, {secs:.1}s"),
    );
}

// ── Criterion 2: vocabulary-loss gradients stay out of the encoder ──────

#[test]
fn criterion_02_gradient_blocking() {
    let (cfg, params, pair, bow) = tiny_model(0);
    let mut tape = Tape::new();
    let tp = register_params(&mut tape, &params);
    let fwd = sentence_forward(&mut tape, &tp, &cfg, &pair, &bow, None).unwrap();
    tape.backward(fwd.nvs_loss, &[fwd.enc_out]).unwrap();
    let mut max_other = 0.0f64;
    let mut nvs_sq = 0.0f64;
    for (name, var) in tp.ordered() {
        let grad = tape.grad(*var);
        if name.starts_with("nvs.") {
            nvs_sq += grad.map_or(0.0, |m| m.data().iter().map(|x| x * x).sum());
        } else if let Some(m) = grad {
            for &x in m.data() {
                max_other = max_other.max(x.abs());
            }
        }
    }
    verdict(
        2,
        "gradient blocking",
        max_other == 0.0 && nvs_sq.sqrt() > 0.0,
        &format!(
            "max non-head gradient {max_other:.1e}, head norm {:.3e}",
            nvs_sq.sqrt()
        ),
    );
}

// ── Criterion 3: restricted softmax is exact ────────────────────────────

#[test]
fn criterion_03_restricted_softmax_exactness() {
    let t0 = Instant::now();
    // Full-vocabulary selection must reproduce unrestricted decoding
    // bit for bit: same gathered rows, same dot products, same search.
    let mut cfg = ModelConfig::small(160, 160);
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.d_ffn = 32;
    cfg.enc_layers = 1;
    cfg.dec_layers = 1;
    cfg.dropout = 0.0;
    let params = ModelParams::init(cfg, 303).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut bitwise = true;
    for _ in 0..100 {
        let src: Vec<u32> = (0..rng.gen_range(3..=9))
            .map(|_| rng.gen_range(4u32..160))
            .collect();
        let full = translate_sentence(&params, &src, &SelectorSpec::Full, None).unwrap();
        let all =
            translate_sentence(&params, &src, &SelectorSpec::Nvs { lambda: 0.0 }, None).unwrap();
        bitwise &= full.tokens == all.tokens
            && full.score.to_bits() == all.score.to_bits()
            && all.vocab_size == 160;
    }

    // Log-softmax over a gathered subset equals the full log-softmax
    // with everything outside the subset masked to negative infinity.
    let mut max_err = 0.0f64;
    for _ in 0..1000 {
        let logits: Vec<f64> = (0..50).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let mut subset: Vec<usize> = (0..50).filter(|_| rng.gen_bool(0.3)).collect();
        if subset.is_empty() {
            subset.push(rng.gen_range(0..50));
        }
        let gathered: Vec<f64> = subset.iter().map(|&i| logits[i]).collect();
        let restricted = log_softmax(&gathered).unwrap();
        let masked: Vec<f64> = (0..50)
            .map(|i| {
                if subset.contains(&i) {
                    logits[i]
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let full = log_softmax(&masked).unwrap();
        for (row, &i) in subset.iter().enumerate() {
            max_err = max_err.max((restricted[row] - full[i]).abs());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        3,
        "restricted softmax exactness",
        bitwise && max_err <= 1e-6 && secs < 60.0,
        &format!("100 decodes bitwise equal: {bitwise}, masked-softmax error {max_err:.1e}"),
    );
}

// ── Criterion 4: loss arithmetic ────────────────────────────────────────

#[test]
fn criterion_04_loss_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    // The normalizer V + (w-1)*n equals the reassociated w*n + (V-n).
    let mut sym_err = 0.0f64;
    for _ in 0..1000 {
        let v = rng.gen_range(5..=5000usize);
        let n = rng.gen_range(1..=v.min(64));
        let w = 10f64.powf(rng.gen_range(-1.0..3.3));
        let got = nvs_normalizer(v, n, w);
        let expect = w * n as f64 + (v as f64 - n as f64);
        sym_err = sym_err.max((got - expect).abs() / expect.abs().max(1.0));
    }

    // A freshly zeroed head scores one half everywhere, so every term
    // of the weighted average is ln 2 and so is the average.
    let (cfg, mut params, pair, bow) = tiny_model(3);
    for (name, m) in params.arrays_mut() {
        if name.starts_with("nvs.") {
            m.data_mut().fill(0.0);
        }
    }
    let mut tape = Tape::new();
    let tp = register_params(&mut tape, &params);
    let fwd = sentence_nvs_forward(&mut tape, &tp, &cfg, &pair, &bow, None).unwrap();
    let ln2_err = (tape.scalar(fwd.nvs_loss) - std::f64::consts::LN_2).abs();

    // The automatic weight is the negative-to-positive ratio, scaled
    // and clipped to at least one.
    let mut auto_err = 0.0f64;
    for _ in 0..200 {
        let v = rng.gen_range(5..=5000usize);
        let n = rng.gen_range(1..v);
        let x = rng.gen_range(0.05..20.0);
        let got = resolve_pos_weight(PosWeightMode::Auto { strength: x }, v, n).unwrap();
        let expect = (x * (v - n) as f64 / n as f64).max(1.0);
        auto_err = auto_err.max((got - expect).abs() / expect.max(1.0));
    }
    let ratio_example =
        resolve_pos_weight(PosWeightMode::Auto { strength: 10.0 }, 100, 10).unwrap();

    verdict(
        4,
        "loss arithmetic",
        sym_err <= 1e-9 && ln2_err <= 1e-12 && auto_err <= 1e-12 && ratio_example == 90.0,
        &format!(
            "normalizer error {sym_err:.1e}, zero-head loss off ln2 by {ln2_err:.1e}, \
             auto-weight error {auto_err:.1e}"
        ),
    );
}

// ── Criterion 5: parameter counting ─────────────────────────────────────

#[test]
fn criterion_05_parameter_counts() {
    let mut cfg = ModelConfig::small(50, 50);
    cfg.d_model = 16;
    cfg.d_ffn = 32;
    let params = ModelParams::init(cfg, 7).unwrap();
    let mut buf = Vec::new();
    save_checkpoint(&params, &mut buf).unwrap();
    let summary = inspect_checkpoint(&buf[..]).unwrap();
    let inspector_ok = summary.nvs_floats() == nvs_float_count(50, 16)
        && summary.total_floats() == params.param_count();

    let head = nvs_float_count(32_953, 1024);
    let lex_small = lexicon_entry_count(200, 32_953);
    let lex_large = lexicon_entry_count(1000, 32_953);
    let table_ok = head == 33_776_825 && lex_small == 6_590_600 && lex_large == 32_953_000;

    verdict(
        5,
        "parameter counts",
        inspector_ok && table_ok,
        &format!(
            "inspector nvs floats {}, head {head}, lexicon {lex_small}/{lex_large}",
            summary.nvs_floats()
        ),
    );
}

// ── Criterion 6: aligner behavior ───────────────────────────────────────

#[test]
fn criterion_06_aligner_behavior() {
    let t0 = Instant::now();
    let mut ll_ok = true;
    for (ci, &tension) in [0.0, 4.0, 2.0, 0.0, 8.0].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + ci as u64);
        let pairs: Vec<SentencePair> = (0..40)
            .map(|_| {
                let src: Vec<u32> = (0..rng.gen_range(3..=8))
                    .map(|_| rng.gen_range(4u32..30))
                    .collect();
                let mut tgt: Vec<u32> = (0..rng.gen_range(3..=8))
                    .map(|_| rng.gen_range(4u32..28))
                    .collect();
                tgt.push(EOS_ID);
                SentencePair::new(src, tgt)
            })
            .collect();
        let cfg = AlignConfig {
            iterations: 10,
            diagonal_tension: tension,
        };
        let (_, lls) = em_train(&pairs, 30, 28, &cfg).unwrap();
        ll_ok &= lls.len() == 10 && lls.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    }

    // A one-to-one dictionary corpus: the top-1 lexicon should read the
    // dictionary back off.
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut image: Vec<u32> = (4..44).collect();
    image.shuffle(&mut rng);
    let pairs: Vec<SentencePair> = (0..50)
        .map(|_| {
            let src: Vec<u32> = (0..rng.gen_range(4..=9))
                .map(|_| rng.gen_range(4u32..44))
                .collect();
            let mut tgt: Vec<u32> = src.iter().map(|&e| image[(e - 4) as usize]).collect();
            tgt.push(EOS_ID);
            SentencePair::new(src, tgt)
        })
        .collect();
    let cfg = AlignConfig {
        iterations: 8,
        diagonal_tension: 0.0,
    };
    let (model, _) = em_train(&pairs, 44, 44, &cfg).unwrap();
    let lexicon = extract_lexicon(&model, 1).unwrap();
    let hits = (4u32..44)
        .filter(|&e| lexicon.top_k(e, 1).first().map(|&(f, _)| f) == Some(image[(e - 4) as usize]))
        .count();

    let secs = t0.elapsed().as_secs_f64();
    verdict(
        6,
        "aligner behavior",
        ll_ok && hits >= 38 && secs < 60.0,
        &format!("likelihood non-decreasing: {ll_ok}, dictionary recovered {hits}/40"),
    );
}

// ── Criterion 7: sweeps are monotone ────────────────────────────────────

#[test]
fn criterion_07_monotone_sweeps() {
    let fx = fixture();
    let v = fx.task.vocab_size();
    let mono = |xs: &[f64]| xs.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    let curve_ok = |recs: &[shortlex_core::bench::BenchRecord]| {
        let avg: Vec<f64> = recs.iter().map(|r| r.avg_vocab_size).collect();
        let rec: Vec<f64> = recs.iter().map(|r| r.recall_sentence).collect();
        mono(&avg) && mono(&rec)
    };

    let nvs_curve = sweep_nvs(&fx.params, &fx.task.test, &lambda_grid()).unwrap();
    let grid_ks = k_grid(fx.lexicon.k_max(), v);
    let grid_curve = sweep_align(&fx.lexicon, &fx.task.test, &grid_ks, v).unwrap();
    let dense_ks: Vec<usize> = (1..=fx.lexicon.k_max()).collect();
    let dense_curve = sweep_align(&fx.lexicon, &fx.task.test, &dense_ks, v).unwrap();

    let pass = curve_ok(&nvs_curve) && curve_ok(&grid_curve) && curve_ok(&dense_curve);
    verdict(
        7,
        "monotone sweeps",
        pass,
        &format!(
            "thresholds {} pts, depth grid {} pts, dense depths {} pts, all monotone: {pass}",
            nvs_curve.len(),
            grid_curve.len(),
            dense_curve.len()
        ),
    );
}

// ── Criterion 8: end-to-end quality on the synthetic task ───────────────

#[test]
fn criterion_08_end_to_end_quality() {
    let fx = fixture();
    let v = fx.task.vocab_size();
    let bows = nvs_bows(&fx.params, &fx.task.test, 0.9);
    let recall = corpus_recall(
        &bows,
        &fx.task.test,
        RecallScope::Sentence,
        Averaging::Macro,
    )
    .unwrap();
    let avg = avg_vocab_size(&bows).unwrap();

    let detok = |ids: &[u32]| {
        let toks: Vec<&str> = ids
            .iter()
            .map(|&i| fx.task.vocab.token(i).unwrap())
            .collect();
        detokenize(&toks)
    };
    let mut full_out = Vec::new();
    let mut nvs_out = Vec::new();
    let mut refs = Vec::new();
    for it in &fx.task.test {
        let full = translate_sentence(&fx.params, &it.source, &SelectorSpec::Full, None).unwrap();
        let nvs = translate_sentence(
            &fx.params,
            &it.source,
            &SelectorSpec::Nvs { lambda: 0.9 },
            None,
        )
        .unwrap();
        full_out.push(detok(&full.tokens));
        nvs_out.push(detok(&nvs.tokens));
        refs.push(detok(&it.reference));
    }
    let bleu_full = corpus_bleu(&full_out, &refs).unwrap();
    let bleu_nvs = corpus_bleu(&nvs_out, &refs).unwrap();
    let gap = (bleu_full - bleu_nvs).abs();

    // Depth matched to the learned selector's average vocabulary size.
    let dense_ks: Vec<usize> = (1..=fx.lexicon.k_max()).collect();
    let dense = sweep_align(&fx.lexicon, &fx.task.test, &dense_ks, v).unwrap();
    let matched = dense
        .iter()
        .min_by(|a, b| {
            (a.avg_vocab_size - avg)
                .abs()
                .partial_cmp(&(b.avg_vocab_size - avg).abs())
                .unwrap()
        })
        .unwrap();
    let size_ok = (matched.avg_vocab_size - avg).abs() <= 0.10 * avg;
    let competitive = matched.recall_sentence <= recall + 1.0;

    let pass = recall >= 95.0
        && avg <= 0.3 * v as f64
        && fx.steps_run <= 20_000
        && fx.train_secs <= 1800.0
        && gap <= 0.5
        && size_ok
        && competitive;
    verdict(
        8,
        "end-to-end quality",
        pass,
        &format!(
            "recall@0.9 {recall:.2}% avg {avg:.1}/{v}, BLEU full {bleu_full:.2} vs \
             restricted {bleu_nvs:.2} (gap {gap:.3}), matched depth k={} avg {:.1} \
             recall {:.2}%, {} steps in {:.0}s",
            matched.param,
            matched.avg_vocab_size,
            matched.recall_sentence,
            fx.steps_run,
            fx.train_secs
        ),
    );
}

// ── Criterion 9: restricted decoding is faster ──────────────────────────

#[test]
fn criterion_09_latency_direction() {
    let v = 32_768usize;
    let mut cfg = ModelConfig::small(v, v);
    cfg.dropout = 0.0;
    let params: ModelParams<f32> = ModelParams::init(cfg, 99).unwrap().cast();
    let src: Vec<u32> = (0..12u32).map(|i| 4 + (i * 613) % (v as u32 - 4)).collect();

    // Threshold placed so the head keeps about an eighth of the
    // vocabulary for this sentence.
    let enc = encode(&params, &src).unwrap();
    let z = nvs_scores(&params, &enc).unwrap();
    let mut sorted = z.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lambda = 0.5 * (sorted[v / 8 - 1] as f64 + sorted[v / 8] as f64);

    let full = time_decode(&params, &[src.clone()], &SelectorSpec::Full, 30).unwrap();
    let nvs = time_decode(&params, &[src], &SelectorSpec::Nvs { lambda }, 30).unwrap();

    let p90_full = full.decode.p90_ms.mean;
    let p90_nvs = nvs.decode.p90_ms.mean;
    let overhead = nvs.select.mean_ms.mean / full.decode.mean_ms.mean;
    let size_ratio = nvs.avg_vocab_size / (v as f64 / 8.0);
    let pass = p90_nvs <= 0.8 * p90_full && overhead < 0.15 && (0.8..=1.2).contains(&size_ratio);
    verdict(
        9,
        "latency direction",
        pass,
        &format!(
            "decode p90 {p90_full:.1}ms full vs {p90_nvs:.1}ms restricted \
             ({:.0}% of full), selection overhead {:.1}% of full decode, \
             kept {:.0} of {v} entries",
            100.0 * p90_nvs / p90_full,
            100.0 * overhead,
            nvs.avg_vocab_size
        ),
    );
}

// ── Criterion 10: adaptation moves held-out recall ──────────────────────

#[test]
fn criterion_10_adaptation() {
    let fx = fixture();
    let v = fx.task.vocab_size();
    let pre = span_recall(&fx.params, &fx.task.idiom_eval, 0.9);
    let mut tuned = fx.params.clone();
    let mut fc = FinetuneConfig::new(17);
    fc.max_batch_tokens = 8;
    finetune(&mut tuned, &fx.task.adapt_train, &fc).unwrap();
    let post = span_recall(&tuned, &fx.task.idiom_eval, 0.9);

    let (adapted, _) = adapt_align(
        &fx.task.train,
        &fx.task.adapt_train,
        10,
        v,
        v,
        &fx.align_cfg,
    )
    .unwrap();
    let adapted_lex = extract_lexicon(&adapted, fx.lexicon.k_max()).unwrap();
    let k = 2;
    let align_recall = |lex: &TranslationLexicon| -> f64 {
        let bows: Vec<BagOfWords> = fx
            .task
            .idiom_eval
            .iter()
            .map(|it| select_align(lex, &it.source, k, v).unwrap())
            .collect();
        corpus_recall(
            &bows,
            &fx.task.idiom_eval,
            RecallScope::Span,
            Averaging::Macro,
        )
        .unwrap()
    };
    let align_pre = align_recall(&fx.lexicon);
    let align_post = align_recall(&adapted_lex);

    verdict(
        10,
        "adaptation",
        post > pre && align_post > align_pre,
        &format!(
            "head span recall {pre:.2}% -> {post:.2}%, \
             lexicon span recall at k={k} {align_pre:.2}% -> {align_post:.2}%"
        ),
    );
}

// ── Criterion 11: selection tracks sentence context ─────────────────────

#[test]
fn criterion_11_context_sensitivity() {
    let fx = fixture();
    let report = context_compare(
        &fx.params,
        &fx.task.vocab,
        &fx.task.ambiguous_eval,
        &[0.9, 0.99],
    )
    .unwrap();
    let mut detail = String::new();
    let mut pass = report.summaries.len() == 2;
    for s in &report.summaries {
        pass &= s.exclusive_contextual_pct > s.exclusive_noncontextual_pct;
        detail.push_str(&format!(
            "lambda {}: all {:.1}%/{:.1}% exclusive {:.1}%/{:.1}%; ",
            s.lambda,
            s.all_contextual_pct,
            s.all_noncontextual_pct,
            s.exclusive_contextual_pct,
            s.exclusive_noncontextual_pct
        ));
    }
    verdict(
        11,
        "context sensitivity",
        pass,
        detail.trim_end_matches("; "),
    );
}
