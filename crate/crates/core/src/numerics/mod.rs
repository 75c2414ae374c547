//! Matrices, numeric kernels and reverse-mode differentiation.

mod matrix;
mod ops;
mod tape;

pub use matrix::{dot, DenseMatrix, Real};
pub use ops::{
    finite_diff_grad, gelu, gelu_prime, layer_norm_cols, log_sigmoid, log_softmax, maxpool_cols,
    row_softmax, sigmoid, softmax, softplus, LAYER_NORM_EPS,
};
pub use tape::{Tape, Var};
