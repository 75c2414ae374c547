//! Dense row-major matrices over `f32` or `f64`.
//!
//! Training and gradient checking run in `f64`; the `f32` instantiation
//! exists for inference latency measurements. Kernels are plain loops
//! arranged so the inner dimension streams contiguously.

use crate::error::{Error, Result};

/// Scalar types the numeric kernels accept.
pub trait Real:
    num_traits::Float
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Row-major dense matrix. A column vector is an `n x 1` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T: Real = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Wraps a slice as an `n x 1` column vector.
    pub fn column(data: Vec<T>) -> Self {
        let rows = data.len();
        Self {
            rows,
            cols: 1,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col_to_vec(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    /// `self * b`.
    pub fn matmul(&self, b: &Self) -> Result<Self> {
        if self.cols != b.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = Self::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (k, &aik) in arow.iter().enumerate() {
                let brow = b.row(k);
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o = *o + aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * b`; `self` is `k x m`, `b` is `k x n`, result is `m x n`.
    pub fn matmul_ta(&self, b: &Self) -> Result<Self> {
        if self.rows != b.rows {
            return Err(Error::Shape(format!(
                "matmul_ta {}x{} ^T * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = Self::zeros(self.cols, b.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = b.row(k);
            for (i, &aki) in arow.iter().enumerate() {
                let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o = *o + aki * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `self * b^T`; `self` is `m x k`, `b` is `n x k`, result is `m x n`.
    pub fn matmul_tb(&self, b: &Self) -> Result<Self> {
        if self.cols != b.cols {
            return Err(Error::Shape(format!(
                "matmul_tb {}x{} * {}x{} ^T",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = Self::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..b.rows {
                out.data[i * b.rows + j] = dot(arow, b.row(j));
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    /// Copies rows `start..start + len` into a new matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.rows {
            return Err(Error::Shape(format!(
                "slice rows {start}..{} of {} rows",
                start + len,
                self.rows
            )));
        }
        let data = self.data[start * self.cols..(start + len) * self.cols].to_vec();
        Ok(Self {
            rows: len,
            cols: self.cols,
            data,
        })
    }

    /// Stacks matrices vertically; all parts must agree on column count.
    pub fn vcat(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("vcat of zero parts".into()))?;
        let cols = first.cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::Shape("vcat parts disagree on column count".into()));
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn add(&self, b: &Self) -> Result<Self> {
        if self.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "add {:?} + {:?}",
                self.shape(),
                b.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn hadamard(&self, b: &Self) -> Result<Self> {
        if self.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "hadamard {:?} * {:?}",
                self.shape(),
                b.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Adds a length-`rows` column vector to every column.
    pub fn add_col_broadcast(&self, col: &Self) -> Result<Self> {
        if col.cols != 1 || col.rows != self.rows {
            return Err(Error::Shape(format!(
                "broadcast add {:?} + {:?}",
                self.shape(),
                col.shape()
            )));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let v = col.data[r];
            for x in out.row_mut(r) {
                *x = *x + v;
            }
        }
        Ok(out)
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(format!(
                "{what} contains a non-finite entry"
            )))
        }
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Dot product with four running sums so the loop vectorizes without
/// reassociating a single serial accumulator.
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] = acc[0] + a[j] * b[j];
        acc[1] = acc[1] + a[j + 1] * b[j + 1];
        acc[2] = acc[2] + a[j + 2] * b[j + 2];
        acc[3] = acc[3] + a[j + 3] * b[j + 3];
    }
    let mut tail = T::zero();
    for j in chunks * 4..a.len() {
        tail = tail + a[j] * b[j];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul_is_identity() {
        let a = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let id = DenseMatrix::identity(3);
        assert_eq!(a.matmul(&id).unwrap(), a);
        let id2 = DenseMatrix::identity(2);
        assert_eq!(id2.matmul(&a).unwrap(), a);
    }

    #[test]
    fn fixed_product() {
        // [1 2 3; 4 5 6] * [7 8; 9 10; 11 12] = [58 64; 139 154]
        let a = DenseMatrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_variants_agree_with_plain_matmul() {
        // Summation order differs between kernels, so compare with a tight
        // tolerance rather than bitwise.
        let close = |x: &DenseMatrix, y: &DenseMatrix| {
            assert_eq!(x.shape(), y.shape());
            for (a, b) in x.data().iter().zip(y.data()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        };
        let a = DenseMatrix::from_fn(3, 4, |r, c| (r * 7 + c) as f64 * 0.25 - 1.0);
        let b = DenseMatrix::from_fn(3, 5, |r, c| (r + c * 3) as f64 * 0.5 - 2.0);
        close(
            &a.matmul_ta(&b).unwrap(),
            &a.transpose().matmul(&b).unwrap(),
        );

        let c = DenseMatrix::from_fn(5, 3, |r, c| (r * 2 + c) as f64 * 0.125);
        close(
            &a.transpose().matmul_tb(&c).unwrap(),
            &a.transpose().matmul(&c.transpose()).unwrap(),
        );
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = DenseMatrix::<f64>::zeros(2, 3);
        let b = DenseMatrix::<f64>::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
        assert!(a.add(&DenseMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn broadcast_add_applies_per_row() {
        let m = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DenseMatrix::column(vec![10.0, 20.0]);
        let out = m.add_col_broadcast(&b).unwrap();
        assert_eq!(out.data(), &[11.0, 12.0, 23.0, 24.0]);
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.3 - 1.0).collect();
        let b: Vec<f64> = (0..13).map(|i| (i * i) as f64 * 0.01).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn check_finite_flags_nan() {
        let mut m = DenseMatrix::<f64>::zeros(2, 2);
        assert!(m.check_finite("m").is_ok());
        m[(1, 1)] = f64::NAN;
        assert!(m.check_finite("m").is_err());
    }

    #[test]
    fn cast_round_trips_f32_values() {
        let m = DenseMatrix::from_vec(1, 3, vec![0.5, -1.25, 3.0]).unwrap();
        let f32m: DenseMatrix<f32> = m.cast();
        let back: DenseMatrix<f64> = f32m.cast();
        assert_eq!(back, m);
    }
}
