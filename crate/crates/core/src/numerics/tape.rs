//! Reverse-mode automatic differentiation over a recorded op list.
//!
//! Forward calls compute values immediately and append one op each; a
//! backward sweep replays the list in reverse, accumulating gradients.
//! Everything runs in `f64`. Ops reference earlier variables only, so
//! reverse index order is a valid topological order.
//!
//! Backward can be told to stop at named boundary variables: gradient
//! still accumulates into the boundary itself but does not flow through
//! the op that produced it. This is how losses that must not reach the
//! encoder are cut off at the encoder output.

use super::matrix::DenseMatrix;
use super::ops;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    /// Input with no upstream; `is_param` is bookkeeping for callers.
    Leaf {
        is_param: bool,
    },
    /// `out = a * b`
    MatMul {
        a: Var,
        b: Var,
    },
    /// `out = a^T * b`
    MatMulTa {
        a: Var,
        b: Var,
    },
    /// `out = a * b^T`
    MatMulTb {
        a: Var,
        b: Var,
    },
    /// `out = a + b`, same shape
    Add {
        a: Var,
        b: Var,
    },
    /// `out[r][c] = a[r][c] + col[r]`
    AddCol {
        a: Var,
        col: Var,
    },
    /// `out = c * a`
    Scale {
        a: Var,
        c: f64,
    },
    /// `out = a .* b`
    Hadamard {
        a: Var,
        b: Var,
    },
    /// softmax applied to each row of `a`
    RowSoftmax {
        a: Var,
    },
    Sigmoid {
        a: Var,
    },
    Gelu {
        a: Var,
    },
    /// Per-column layer norm with per-row gain and bias vectors.
    LayerNormCols {
        a: Var,
        gain: Var,
        bias: Var,
        xhat: DenseMatrix,
        inv_std: Vec<f64>,
    },
    /// `out[:, j] = table.row(ids[j])^T`
    EmbedCols {
        table: Var,
        ids: Vec<usize>,
    },
    SliceRows {
        a: Var,
        start: usize,
    },
    ConcatRows {
        parts: Vec<Var>,
    },
    /// Per-row max over unmasked columns; `argmax` holds the winners.
    MaxPoolCols {
        a: Var,
        argmax: Vec<usize>,
    },
    /// `out = sum of all entries of a`
    SumAll {
        a: Var,
    },
    /// Label-smoothed cross entropy, averaged over columns of `logits`.
    CeLabelSmooth {
        logits: Var,
        targets: Vec<usize>,
        eps: f64,
        probs: DenseMatrix,
    },
    /// `out = -scale * sum_i [pos_weight * y_i * log z_i + (1 - y_i) * log(1 - z_i)]`
    /// with `z = sigmoid(scores)`, computed in log-sigmoid space.
    WeightedBce {
        scores: Var,
        positives: Vec<bool>,
        pos_weight: f64,
        scale: f64,
        z: Vec<f64>,
    },
}

struct Node {
    value: DenseMatrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<DenseMatrix>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` variable.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.value(v).shape(), (1, 1));
        self.value(v).data()[0]
    }

    /// Gradient accumulated so far, if any backward pass reached `v`.
    pub fn grad(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads[v.0].as_ref()
    }

    /// True for variables registered through [`Tape::param`].
    pub fn is_param(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf { is_param: true })
    }

    pub fn clear_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    // ── Recording ───────────────────────────────────────────────────────

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf { is_param: false })
    }

    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf { is_param: true })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul { a, b }))
    }

    pub fn matmul_ta(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_ta(self.value(b))?;
        Ok(self.push(value, Op::MatMulTa { a, b }))
    }

    pub fn matmul_tb(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_tb(self.value(b))?;
        Ok(self.push(value, Op::MatMulTb { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn add_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let value = self.value(a).add_col_broadcast(self.value(col))?;
        Ok(self.push(value, Op::AddCol { a, col }))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).scale(c);
        self.push(value, Op::Scale { a, c })
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard { a, b }))
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let mut value = DenseMatrix::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            let p = ops::softmax(src.row(r))?;
            value.row_mut(r).copy_from_slice(&p);
        }
        Ok(self.push(value, Op::RowSoftmax { a }))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(ops::sigmoid);
        self.push(value, Op::Sigmoid { a })
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(ops::gelu);
        self.push(value, Op::Gelu { a })
    }

    pub fn layer_norm_cols(&mut self, a: Var, gain: Var, bias: Var) -> Result<Var> {
        const EPS: f64 = ops::LAYER_NORM_EPS;
        let x = self.value(a);
        let (d, t) = x.shape();
        let g = self.value(gain);
        let b = self.value(bias);
        if g.shape() != (d, 1) || b.shape() != (d, 1) {
            return Err(Error::Shape(format!(
                "layer norm over {d} rows with gain {:?} and bias {:?}",
                g.shape(),
                b.shape()
            )));
        }
        let mut xhat = DenseMatrix::zeros(d, t);
        let mut inv_std = Vec::with_capacity(t);
        let mut value = DenseMatrix::zeros(d, t);
        let df = d as f64;
        for j in 0..t {
            let mean = (0..d).map(|i| x[(i, j)]).sum::<f64>() / df;
            let var = (0..d).map(|i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / df;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std.push(is);
            for i in 0..d {
                let xh = (x[(i, j)] - mean) * is;
                xhat[(i, j)] = xh;
                value[(i, j)] = g[(i, 0)] * xh + b[(i, 0)];
            }
        }
        Ok(self.push(
            value,
            Op::LayerNormCols {
                a,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Looks up one embedding column per id; `table` is vocab-by-dim.
    pub fn embed_cols(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let tb = self.value(table);
        let (v, d) = tb.shape();
        if ids.is_empty() {
            return Err(Error::InvalidInput(
                "embedding lookup of an empty sequence".into(),
            ));
        }
        let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::InvalidInput(format!(
                "token id {bad} outside vocabulary of {v}"
            )));
        }
        let mut value = DenseMatrix::zeros(d, ids.len());
        for (j, &id) in ids.iter().enumerate() {
            for (i, &x) in tb.row(id).iter().enumerate() {
                value[(i, j)] = x;
            }
        }
        Ok(self.push(value, Op::EmbedCols { table, ids }))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(a);
        if start + len > src.rows() {
            return Err(Error::Shape(format!(
                "slice rows {start}..{} of {} rows",
                start + len,
                src.rows()
            )));
        }
        let value = DenseMatrix::from_fn(len, src.cols(), |r, c| src[(start + r, c)]);
        Ok(self.push(value, Op::SliceRows { a, start }))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::InvalidInput("concat of zero parts".into()));
        }
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(Error::Shape("concat parts disagree on column count".into()));
            }
            rows += m.rows();
            data.extend_from_slice(m.data());
        }
        let value = DenseMatrix::from_vec(rows, cols, data)?;
        Ok(self.push(
            value,
            Op::ConcatRows {
                parts: parts.to_vec(),
            },
        ))
    }

    pub fn maxpool_cols(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (value, argmax) = ops::maxpool_cols(self.value(a), mask)?;
        Ok(self.push(value, Op::MaxPoolCols { a, argmax }))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total: f64 = self.value(a).data().iter().sum();
        let value = DenseMatrix::from_vec(1, 1, vec![total]).expect("1x1");
        self.push(value, Op::SumAll { a })
    }

    /// Cross entropy against label-smoothed targets, averaged over the
    /// columns of `logits` (one column per position).
    pub fn ce_label_smooth(&mut self, logits: Var, targets: &[u32], eps: f64) -> Result<Var> {
        let lg = self.value(logits);
        let (v, t) = lg.shape();
        if targets.len() != t {
            return Err(Error::Shape(format!(
                "{} targets for {t} logit columns",
                targets.len()
            )));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidInput(format!(
                "smoothing {eps} outside [0, 1)"
            )));
        }
        let targets: Vec<usize> = targets.iter().map(|&i| i as usize).collect();
        if let Some(&bad) = targets.iter().find(|&&i| i >= v) {
            return Err(Error::InvalidInput(format!(
                "target id {bad} outside vocabulary of {v}"
            )));
        }
        let uniform = eps / v as f64;
        let mut probs = DenseMatrix::zeros(v, t);
        let mut total = 0.0;
        for (j, &y) in targets.iter().enumerate() {
            let col: Vec<f64> = (0..v).map(|i| lg[(i, j)]).collect();
            let logp = ops::log_softmax(&col)?;
            let mut loss_j = 0.0;
            for (i, &lp) in logp.iter().enumerate() {
                let q = uniform + if i == y { 1.0 - eps } else { 0.0 };
                loss_j -= q * lp;
                probs[(i, j)] = lp.exp();
            }
            total += loss_j;
        }
        let value = DenseMatrix::from_vec(1, 1, vec![total / t as f64])?;
        Ok(self.push(
            value,
            Op::CeLabelSmooth {
                logits,
                targets,
                eps,
                probs,
            },
        ))
    }

    /// Weighted binary cross entropy on a column of pre-sigmoid scores.
    ///
    /// `loss = -scale * sum_i [pos_weight * y_i * log z_i + (1 - y_i) * log(1 - z_i)]`
    /// where `z = sigmoid(scores)`. Log terms come from `log_sigmoid`, so
    /// extreme scores stay finite.
    pub fn weighted_bce(
        &mut self,
        scores: Var,
        positives: &[bool],
        pos_weight: f64,
        scale: f64,
    ) -> Result<Var> {
        let s = self.value(scores);
        if s.cols() != 1 {
            return Err(Error::Shape(format!(
                "scores must be a column, got {:?}",
                s.shape()
            )));
        }
        if positives.len() != s.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} scores",
                positives.len(),
                s.rows()
            )));
        }
        if !(pos_weight.is_finite() && pos_weight > 0.0) {
            return Err(Error::InvalidInput(format!("positive weight {pos_weight}")));
        }
        let mut total = 0.0;
        let mut z = Vec::with_capacity(s.rows());
        for (i, &si) in s.data().iter().enumerate() {
            z.push(ops::sigmoid(si));
            if positives[i] {
                total += pos_weight * ops::log_sigmoid(si);
            } else {
                total += ops::log_sigmoid(-si); // log(1 - sigmoid(s))
            }
        }
        let value = DenseMatrix::from_vec(1, 1, vec![-scale * total])?;
        Ok(self.push(
            value,
            Op::WeightedBce {
                scores,
                positives: positives.to_vec(),
                pos_weight,
                scale,
                z,
            },
        ))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Runs one reverse sweep from a scalar loss, adding into stored
    /// gradients. Repeated calls accumulate. Propagation stops at any
    /// variable in `boundaries`: the boundary still receives gradient,
    /// everything upstream of it receives none from this loss.
    pub fn backward(&mut self, loss: Var, boundaries: &[Var]) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward from non-scalar {:?}",
                self.value(loss).shape()
            )));
        }
        let mut work: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        work[loss.0] = Some(DenseMatrix::from_vec(1, 1, vec![1.0])?);
        for idx in (0..=loss.0).rev() {
            let Some(g) = work[idx].take() else { continue };
            accumulate(&mut self.grads[idx], &g);
            if boundaries.iter().any(|b| b.0 == idx) {
                continue;
            }
            self.propagate(idx, &g, &mut work)?;
        }
        Ok(())
    }

    fn propagate(
        &self,
        idx: usize,
        g: &DenseMatrix,
        work: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        let vals = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[idx].op {
            Op::Leaf { .. } => {}
            Op::MatMul { a, b } => {
                accumulate_opt(&mut work[a.0], g.matmul_tb(vals(*b))?);
                accumulate_opt(&mut work[b.0], vals(*a).matmul_ta(g)?);
            }
            Op::MatMulTa { a, b } => {
                accumulate_opt(&mut work[a.0], vals(*b).matmul_tb(g)?);
                accumulate_opt(&mut work[b.0], vals(*a).matmul(g)?);
            }
            Op::MatMulTb { a, b } => {
                accumulate_opt(&mut work[a.0], g.matmul(vals(*b))?);
                accumulate_opt(&mut work[b.0], g.matmul_ta(vals(*a))?);
            }
            Op::Add { a, b } => {
                accumulate_opt(&mut work[a.0], g.clone());
                accumulate_opt(&mut work[b.0], g.clone());
            }
            Op::AddCol { a, col } => {
                accumulate_opt(&mut work[a.0], g.clone());
                let sums: Vec<f64> = (0..g.rows()).map(|r| g.row(r).iter().sum()).collect();
                accumulate_opt(&mut work[col.0], DenseMatrix::column(sums));
            }
            Op::Scale { a, c } => {
                accumulate_opt(&mut work[a.0], g.scale(*c));
            }
            Op::Hadamard { a, b } => {
                accumulate_opt(&mut work[a.0], g.hadamard(vals(*b))?);
                accumulate_opt(&mut work[b.0], g.hadamard(vals(*a))?);
            }
            Op::RowSoftmax { a } => {
                let p = &self.nodes[idx].value;
                let mut da = DenseMatrix::zeros(p.rows(), p.cols());
                for r in 0..p.rows() {
                    let dotv = super::matrix::dot(g.row(r), p.row(r));
                    for c in 0..p.cols() {
                        da[(r, c)] = p[(r, c)] * (g[(r, c)] - dotv);
                    }
                }
                accumulate_opt(&mut work[a.0], da);
            }
            Op::Sigmoid { a } => {
                let z = &self.nodes[idx].value;
                let da = DenseMatrix::from_fn(z.rows(), z.cols(), |r, c| {
                    g[(r, c)] * z[(r, c)] * (1.0 - z[(r, c)])
                });
                accumulate_opt(&mut work[a.0], da);
            }
            Op::Gelu { a } => {
                let x = vals(*a);
                let da = DenseMatrix::from_fn(x.rows(), x.cols(), |r, c| {
                    g[(r, c)] * ops::gelu_prime(x[(r, c)])
                });
                accumulate_opt(&mut work[a.0], da);
            }
            Op::LayerNormCols {
                a,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (d, t) = xhat.shape();
                let gn = vals(*gain);
                let mut da = DenseMatrix::zeros(d, t);
                let mut dgain = DenseMatrix::zeros(d, 1);
                let mut dbias = DenseMatrix::zeros(d, 1);
                let df = d as f64;
                for j in 0..t {
                    let mut mean_dxh = 0.0;
                    let mut mean_dxh_xh = 0.0;
                    for i in 0..d {
                        let dy = g[(i, j)];
                        let xh = xhat[(i, j)];
                        dgain[(i, 0)] += dy * xh;
                        dbias[(i, 0)] += dy;
                        let dxh = dy * gn[(i, 0)];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * xh;
                    }
                    mean_dxh /= df;
                    mean_dxh_xh /= df;
                    for i in 0..d {
                        let dxh = g[(i, j)] * gn[(i, 0)];
                        da[(i, j)] = inv_std[j] * (dxh - mean_dxh - xhat[(i, j)] * mean_dxh_xh);
                    }
                }
                accumulate_opt(&mut work[a.0], da);
                accumulate_opt(&mut work[gain.0], dgain);
                accumulate_opt(&mut work[bias.0], dbias);
            }
            Op::EmbedCols { table, ids } => {
                let tb = vals(*table);
                let mut dt = DenseMatrix::zeros(tb.rows(), tb.cols());
                for (j, &id) in ids.iter().enumerate() {
                    for i in 0..g.rows() {
                        dt[(id, i)] += g[(i, j)];
                    }
                }
                accumulate_opt(&mut work[table.0], dt);
            }
            Op::SliceRows { a, start } => {
                let src = vals(*a);
                let mut da = DenseMatrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        da[(start + r, c)] = g[(r, c)];
                    }
                }
                accumulate_opt(&mut work[a.0], da);
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let rows = vals(p).rows();
                    let dp = DenseMatrix::from_fn(rows, g.cols(), |r, c| g[(offset + r, c)]);
                    accumulate_opt(&mut work[p.0], dp);
                    offset += rows;
                }
            }
            Op::MaxPoolCols { a, argmax } => {
                let src = vals(*a);
                let mut da = DenseMatrix::zeros(src.rows(), src.cols());
                for (r, &j) in argmax.iter().enumerate() {
                    da[(r, j)] += g[(r, 0)];
                }
                accumulate_opt(&mut work[a.0], da);
            }
            Op::SumAll { a } => {
                let src = vals(*a);
                accumulate_opt(
                    &mut work[a.0],
                    DenseMatrix::filled(src.rows(), src.cols(), g[(0, 0)]),
                );
            }
            Op::CeLabelSmooth {
                logits,
                targets,
                eps,
                probs,
            } => {
                let (v, t) = probs.shape();
                let s = g[(0, 0)] / t as f64;
                let uniform = eps / v as f64;
                let mut dl = DenseMatrix::zeros(v, t);
                for (j, &y) in targets.iter().enumerate() {
                    for i in 0..v {
                        let q = uniform + if i == y { 1.0 - eps } else { 0.0 };
                        dl[(i, j)] = s * (probs[(i, j)] - q);
                    }
                }
                accumulate_opt(&mut work[logits.0], dl);
            }
            Op::WeightedBce {
                scores,
                positives,
                pos_weight,
                scale,
                z,
            } => {
                let s = g[(0, 0)] * scale;
                let mut ds = DenseMatrix::zeros(z.len(), 1);
                for (i, &zi) in z.iter().enumerate() {
                    ds[(i, 0)] = if positives[i] {
                        -s * pos_weight * (1.0 - zi)
                    } else {
                        s * zi
                    };
                }
                accumulate_opt(&mut work[scores.0], ds);
            }
        }
        Ok(())
    }
}

fn accumulate(slot: &mut Option<DenseMatrix>, delta: &DenseMatrix) {
    match slot {
        Some(acc) => {
            debug_assert_eq!(acc.shape(), delta.shape());
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a += *d;
            }
        }
        None => *slot = Some(delta.clone()),
    }
}

fn accumulate_opt(slot: &mut Option<DenseMatrix>, delta: DenseMatrix) {
    match slot {
        Some(acc) => {
            debug_assert_eq!(acc.shape(), delta.shape());
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a += *d;
            }
        }
        None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ops::finite_diff_grad;

    /// Checks the tape gradient of one parameter against central
    /// differences of the same scalar-valued graph.
    fn check_param_grad(
        build: impl Fn(&mut Tape, &DenseMatrix) -> Var,
        init: DenseMatrix,
        tol: f64,
    ) {
        let mut tape = Tape::new();
        let loss = build(&mut tape, &init);
        tape.backward(loss, &[]).unwrap();
        // The parameter is always the first recorded variable.
        let got = tape.grad(Var(0)).expect("param grad").clone();

        let (rows, cols) = init.shape();
        let fd = finite_diff_grad(
            |x| {
                let m = DenseMatrix::from_vec(rows, cols, x.to_vec())?;
                let mut t = Tape::new();
                let l = build(&mut t, &m);
                Ok(t.scalar(l))
            },
            init.data(),
            1e-5,
        )
        .unwrap();
        for (i, (&g, &f)) in got.data().iter().zip(&fd).enumerate() {
            assert!(
                (g - f).abs() <= tol * f.abs().max(g.abs()).max(1.0),
                "coordinate {i}: tape {g} vs fd {f}"
            );
        }
    }

    fn seeded(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |r, c| {
            let mut x = seed ^ ((r as u64) << 32) ^ (c as u64);
            x = x.wrapping_mul(0x9e3779b97f4a7c15);
            x ^= x >> 29;
            (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
    }

    #[test]
    fn matmul_family_gradients() {
        let k = seeded(3, 4, 7);
        check_param_grad(
            move |t, p| {
                let a = t.param(p.clone());
                let b = t.constant(k.clone());
                let c = t.matmul(a, b).unwrap();
                t.sum_all(c)
            },
            seeded(2, 3, 1),
            1e-6,
        );
        let k = seeded(3, 4, 8);
        check_param_grad(
            move |t, p| {
                let a = t.param(p.clone());
                let b = t.constant(k.clone());
                let c = t.matmul_ta(a, b).unwrap();
                t.sum_all(c)
            },
            seeded(3, 2, 2),
            1e-6,
        );
        let k = seeded(5, 3, 9);
        check_param_grad(
            move |t, p| {
                let a = t.param(p.clone());
                let b = t.constant(k.clone());
                let c = t.matmul_tb(a, b).unwrap();
                t.sum_all(c)
            },
            seeded(2, 3, 3),
            1e-6,
        );
    }

    #[test]
    fn elementwise_gradients() {
        let k = seeded(3, 3, 11);
        check_param_grad(
            move |t, p| {
                let a = t.param(p.clone());
                let b = t.constant(k.clone());
                let h = t.hadamard(a, b).unwrap();
                let s = t.sigmoid(h);
                let g = t.gelu(s);
                let sc = t.scale(g, 1.7);
                t.sum_all(sc)
            },
            seeded(3, 3, 4),
            1e-6,
        );
    }

    #[test]
    fn softmax_rows_gradient() {
        check_param_grad(
            |t, p| {
                let a = t.param(p.clone());
                let sm = t.row_softmax(a).unwrap();
                // Weighted sum so the gradient is not the trivial zero of sum(softmax).
                let w = t.constant(DenseMatrix::from_fn(2, 4, |r, c| (r * 4 + c) as f64 * 0.3));
                let h = t.hadamard(sm, w).unwrap();
                t.sum_all(h)
            },
            seeded(2, 4, 5),
            1e-6,
        );
    }

    #[test]
    fn layer_norm_gradient_for_all_three_inputs() {
        let x0 = seeded(4, 3, 6);
        let g0 = seeded(4, 1, 7).map(|v| v + 1.5);
        let b0 = seeded(4, 1, 8);

        // input
        let (g0c, b0c) = (g0.clone(), b0.clone());
        check_param_grad(
            move |t, p| {
                let x = t.param(p.clone());
                let g = t.constant(g0c.clone());
                let b = t.constant(b0c.clone());
                let y = t.layer_norm_cols(x, g, b).unwrap();
                let w = t.constant(DenseMatrix::from_fn(4, 3, |r, c| {
                    ((r + 2 * c) % 5) as f64 * 0.4 - 1.0
                }));
                let h = t.hadamard(y, w).unwrap();
                t.sum_all(h)
            },
            x0.clone(),
            1e-5,
        );
        // gain
        let (x0c, b0c) = (x0.clone(), b0.clone());
        check_param_grad(
            move |t, p| {
                let g = t.param(p.clone());
                let x = t.constant(x0c.clone());
                let b = t.constant(b0c.clone());
                let y = t.layer_norm_cols(x, g, b).unwrap();
                t.sum_all(y)
            },
            g0.clone(),
            1e-6,
        );
        // bias
        check_param_grad(
            move |t, p| {
                let b = t.param(p.clone());
                let x = t.constant(x0.clone());
                let g = t.constant(g0.clone());
                let y = t.layer_norm_cols(x, g, b).unwrap();
                t.sum_all(y)
            },
            b0,
            1e-6,
        );
    }

    #[test]
    fn embedding_scatter_gradient() {
        check_param_grad(
            |t, p| {
                let table = t.param(p.clone());
                let e = t.embed_cols(table, &[2, 0, 2]).unwrap();
                let w = t.constant(DenseMatrix::from_fn(3, 3, |r, c| (r + c) as f64 * 0.5));
                let h = t.hadamard(e, w).unwrap();
                t.sum_all(h)
            },
            seeded(4, 3, 10),
            1e-6,
        );
    }

    #[test]
    fn slice_concat_maxpool_gradients() {
        check_param_grad(
            |t, p| {
                let a = t.param(p.clone());
                let top = t.slice_rows(a, 0, 2).unwrap();
                let bottom = t.slice_rows(a, 2, 2).unwrap();
                let swapped = t.concat_rows(&[bottom, top]).unwrap();
                let pooled = t.maxpool_cols(swapped, Some(&[true, true, false])).unwrap();
                t.sum_all(pooled)
            },
            seeded(4, 3, 12),
            1e-6,
        );
    }

    #[test]
    fn cross_entropy_gradient() {
        check_param_grad(
            |t, p| {
                let logits = t.param(p.clone());
                t.ce_label_smooth(logits, &[1, 3, 0], 0.1).unwrap()
            },
            seeded(5, 3, 13),
            1e-6,
        );
    }

    #[test]
    fn weighted_bce_gradient() {
        check_param_grad(
            |t, p| {
                let s = t.param(p.clone());
                t.weighted_bce(s, &[true, false, false, true, false], 7.0, 0.05)
                    .unwrap()
            },
            seeded(5, 1, 14),
            1e-6,
        );
    }

    #[test]
    fn backward_twice_doubles_gradients() {
        let mut tape = Tape::new();
        let a = tape.param(seeded(2, 2, 15));
        let s = tape.sigmoid(a);
        let loss = tape.sum_all(s);
        tape.backward(loss, &[]).unwrap();
        let once = tape.grad(a).unwrap().clone();
        tape.backward(loss, &[]).unwrap();
        let twice = tape.grad(a).unwrap();
        for (x, y) in once.data().iter().zip(twice.data()) {
            assert_eq!(*y, 2.0 * *x);
        }
    }

    #[test]
    fn boundary_blocks_upstream_flow_exactly() {
        let mut tape = Tape::new();
        let x = tape.param(seeded(3, 2, 16));
        let a = tape.param(seeded(3, 3, 17));
        let b = tape.param(seeded(2, 3, 18));
        let y = tape.matmul(a, x).unwrap(); // upstream of the boundary
        let z = tape.matmul(b, y).unwrap(); // downstream
        let loss = tape.sum_all(z);
        tape.backward(loss, &[y]).unwrap();

        assert!(tape.grad(x).is_none(), "gradient crossed the boundary");
        assert!(tape.grad(a).is_none(), "gradient crossed the boundary");
        let gb = tape.grad(b).expect("downstream parameter still trains");
        assert!(gb.data().iter().any(|&v| v != 0.0));
        assert!(
            tape.grad(y).is_some(),
            "boundary itself still receives gradient"
        );
    }

    #[test]
    fn blocked_plus_unblocked_losses_add_up() {
        // loss1 flows through y into x; loss2 is cut at y. The x gradient
        // must equal the loss1-only gradient exactly.
        let mut tape = Tape::new();
        let x = tape.param(seeded(2, 2, 19));
        let y = tape.sigmoid(x);
        let l1 = tape.sum_all(y);
        let g = tape.gelu(y);
        let l2 = tape.sum_all(g);
        tape.backward(l1, &[]).unwrap();
        let only_l1 = tape.grad(x).unwrap().clone();
        tape.backward(l2, &[y]).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &only_l1);
        // Without the boundary the gradient changes.
        tape.clear_grads();
        tape.backward(l1, &[]).unwrap();
        tape.backward(l2, &[]).unwrap();
        assert_ne!(tape.grad(x).unwrap(), &only_l1);
    }
}
