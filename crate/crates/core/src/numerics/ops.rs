//! Elementwise and reduction kernels shared by training and inference.

use super::matrix::{DenseMatrix, Real};
use crate::error::{Error, Result};

/// Numerically stable softmax of one logit vector.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return Err(Error::Numeric("softmax input has no finite maximum".into()));
    }
    let mut out: Vec<T> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: T = out.iter().cloned().sum();
    for x in &mut out {
        *x = *x / sum;
    }
    Ok(out)
}

/// `log(softmax(logits))` without forming the probabilities.
pub fn log_softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("log_softmax of an empty vector".into()));
    }
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return Err(Error::Numeric(
            "log_softmax input has no finite maximum".into(),
        ));
    }
    let sum: T = logits.iter().map(|&x| (x - max).exp()).sum();
    let log_z = max + sum.ln();
    Ok(logits.iter().map(|&x| x - log_z).collect())
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + exp(x))` without overflow for large `|x|`.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// `ln(sigmoid(x))`; stays finite for any finite input.
pub fn log_sigmoid<T: Real>(x: T) -> T {
    -softplus(-x)
}

/// Gaussian error linear unit, tanh form. Smooth everywhere, which keeps
/// central finite differences honest in gradient checks.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

/// Derivative of [`gelu`] at `x`.
pub fn gelu_prime<T: Real>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4);
    let k = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * k * x * x)
}

/// Per-row maximum over unmasked columns.
///
/// Returns the pooled values as an `n x 1` column plus the winning column
/// index per row (first column on ties). `mask[j] = false` removes column
/// `j` from every row; at least one column must stay unmasked.
pub fn maxpool_cols<T: Real>(
    m: &DenseMatrix<T>,
    mask: Option<&[bool]>,
) -> Result<(DenseMatrix<T>, Vec<usize>)> {
    if let Some(mask) = mask {
        if mask.len() != m.cols() {
            return Err(Error::Shape(format!(
                "maxpool mask has {} entries for {} columns",
                mask.len(),
                m.cols()
            )));
        }
        if !mask.iter().any(|&keep| keep) {
            return Err(Error::InvalidInput(
                "maxpool with every column masked".into(),
            ));
        }
    } else if m.cols() == 0 {
        return Err(Error::InvalidInput(
            "maxpool of a matrix with no columns".into(),
        ));
    }
    let keep = |j: usize| mask.map_or(true, |m| m[j]);
    let mut values = Vec::with_capacity(m.rows());
    let mut argmax = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let row = m.row(r);
        let mut best = T::neg_infinity();
        let mut best_j = usize::MAX;
        for (j, &x) in row.iter().enumerate() {
            if keep(j) && x > best {
                best = x;
                best_j = j;
            }
        }
        values.push(best);
        argmax.push(best_j);
    }
    Ok((DenseMatrix::column(values), argmax))
}

/// Variance floor shared by every layer normalization, training and
/// inference alike.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Softmax applied to each row of a matrix.
pub fn row_softmax<T: Real>(m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let p = softmax(m.row(r))?;
        out.row_mut(r).copy_from_slice(&p);
    }
    Ok(out)
}

/// Normalizes each column to zero mean and unit variance, then applies a
/// per-row gain and bias. Forward-only twin of the recorded training op.
pub fn layer_norm_cols<T: Real>(
    x: &DenseMatrix<T>,
    gain: &DenseMatrix<T>,
    bias: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    let (d, t) = x.shape();
    if gain.shape() != (d, 1) || bias.shape() != (d, 1) {
        return Err(Error::Shape(format!(
            "layer norm over {d} rows with gain {:?} and bias {:?}",
            gain.shape(),
            bias.shape()
        )));
    }
    let df = T::from_f64(d as f64);
    let eps = T::from_f64(LAYER_NORM_EPS);
    let mut out = DenseMatrix::zeros(d, t);
    for j in 0..t {
        let mut mean = T::zero();
        for i in 0..d {
            mean = mean + x[(i, j)];
        }
        mean = mean / df;
        let mut var = T::zero();
        for i in 0..d {
            let c = x[(i, j)] - mean;
            var = var + c * c;
        }
        var = var / df;
        let inv_std = T::one() / (var + eps).sqrt();
        for i in 0..d {
            // Grouped exactly like the recorded training op so the two
            // paths agree bit for bit.
            out[(i, j)] = gain[(i, 0)] * ((x[(i, j)] - mean) * inv_std) + bias[(i, 0)];
        }
    }
    Ok(out)
}

/// Central-difference gradient of a scalar function.
///
/// Perturbs one coordinate at a time by `h` in each direction. Fails if
/// any evaluation returns a non-finite value.
pub fn finite_diff_grad(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    at: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step size {h} must be positive"
        )));
    }
    let mut x = at.to_vec();
    let mut grad = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = f(&x)?;
        x[i] = orig - h;
        let down = f(&x)?;
        x[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite evaluation at coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_of_long_vector_sums_to_one() {
        let logits: Vec<f64> = (0..100_000)
            .map(|i| ((i * 2654435761_usize) % 60001) as f64 / 1000.0 - 30.0)
            .collect();
        let p = softmax(&logits).unwrap();
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6, "sum {sum}");
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn sigmoid_never_underflows_in_log_space() {
        for &x in &[-500.0, -50.0, -1.0, 0.0, 1.0, 50.0, 500.0] {
            let s: f64 = sigmoid(x);
            assert!(
                s > 0.0 && s < 1.0 || (s == 1.0 && x >= 50.0),
                "sigmoid({x}) = {s}"
            );
            assert!(log_sigmoid(x).is_finite(), "log_sigmoid({x})");
            assert!(log_sigmoid(-x).is_finite());
        }
        assert!(sigmoid(-50.0_f64) > 0.0);
        assert!((log_sigmoid(0.0_f64) + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn maxpool_reports_values_and_argmax() {
        // [1 5 2; 7 0 7]: row maxima 5 (col 1) and 7 (col 0, first win on tie).
        let m = DenseMatrix::from_vec(2, 3, vec![1.0, 5.0, 2.0, 7.0, 0.0, 7.0]).unwrap();
        let (vals, arg) = maxpool_cols(&m, None).unwrap();
        assert_eq!(vals.data(), &[5.0, 7.0]);
        assert_eq!(arg, vec![1, 0]);

        let (vals, arg) = maxpool_cols(&m, Some(&[true, false, true])).unwrap();
        assert_eq!(vals.data(), &[2.0, 7.0]);
        assert_eq!(arg, vec![2, 0]);

        assert!(maxpool_cols(&m, Some(&[false, false, false])).is_err());
    }

    #[test]
    fn finite_diff_matches_quadratic() {
        let f = |x: &[f64]| Ok(x.iter().map(|v| v * v).sum());
        let at = [1.0, -2.0, 0.5];
        let g = finite_diff_grad(f, &at, 1e-4).unwrap();
        for (gi, xi) in g.iter().zip(&at) {
            assert!((gi - 2.0 * xi).abs() < 1e-8, "{gi} vs {}", 2.0 * xi);
        }
    }

    #[test]
    fn finite_diff_rejects_non_finite() {
        let f = |x: &[f64]| Ok(x[0].sqrt());
        assert!(finite_diff_grad(f, &[-0.5], 1e-4).is_err());
    }

    #[test]
    fn gelu_prime_matches_finite_difference() {
        for i in -20..=20 {
            let x = i as f64 * 0.25;
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((gelu_prime(x) - fd).abs() < 1e-8, "x={x}");
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(logits in proptest::collection::vec(-30.0f64..30.0, 1..200)) {
            let p = softmax(&logits).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }

        #[test]
        fn maxpool_distributes_over_column_concat(
            rows in 1usize..6,
            ca in 1usize..6,
            cb in 1usize..6,
            seed in 0u64..1000,
        ) {
            let gen = |r: usize, c: usize, salt: u64| {
                let mut mixed = seed ^ salt ^ ((r as u64) << 32) ^ (c as u64);
                mixed = mixed.wrapping_mul(0x9e3779b97f4a7c15);
                (mixed >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
            };
            let a = DenseMatrix::from_fn(rows, ca, |r, c| gen(r, c, 1));
            let b = DenseMatrix::from_fn(rows, cb, |r, c| gen(r, c, 2));
            let joined = DenseMatrix::from_fn(rows, ca + cb, |r, c| {
                if c < ca { a[(r, c)] } else { b[(r, c - ca)] }
            });
            let (pj, _) = maxpool_cols(&joined, None).unwrap();
            let (pa, _) = maxpool_cols(&a, None).unwrap();
            let (pb, _) = maxpool_cols(&b, None).unwrap();
            for r in 0..rows {
                prop_assert_eq!(pj[(r, 0)], pa[(r, 0)].max(pb[(r, 0)]));
            }
        }
    }
}
