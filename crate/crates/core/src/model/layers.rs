//! Forward computation of the two layer kinds: fully connected layers and
//! the learned separable transform (LST) block.
//!
//! An LST block runs one shared FC layer over every row of a 2D input, then
//! a second shared FC layer over every column of the intermediate. For a
//! `d_in x d_in` input and `d_out x d_out` output it stores
//! `2 * (d_in + 1) * d_out` parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    None,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::None => x,
        }
    }
}

/// Fully connected layer `y = g(W x + b)`. Weights are `d_out x d_in`;
/// the bias is kept as a separate vector but counted with the
/// `(d_in + 1) * d_out` convention.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer<T> {
    pub w: Matrix<T>,
    pub b: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> FcLayer<T> {
    pub fn zeros(d_in: usize, d_out: usize, activation: Activation) -> Self {
        FcLayer {
            w: Matrix::zeros(d_out, d_in),
            b: vec![T::zero(); d_out],
            activation,
        }
    }

    #[inline]
    pub fn d_in(&self) -> usize {
        self.w.cols()
    }

    #[inline]
    pub fn d_out(&self) -> usize {
        self.w.rows()
    }

    pub fn param_count(&self) -> usize {
        (self.d_in() + 1) * self.d_out()
    }

    /// Hot-path forward into a caller-provided buffer.
    #[inline]
    pub fn apply(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.d_in());
        debug_assert_eq!(out.len(), self.d_out());
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.activation.apply(self.b[j] + dot(self.w.row(j), x));
        }
    }
}

pub fn fc_forward<T: Real>(layer: &FcLayer<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != layer.d_in() {
        return Err(Error::ShapeMismatch(format!(
            "fc input length {} != d_in {}",
            x.len(),
            layer.d_in()
        )));
    }
    let mut out = vec![T::zero(); layer.d_out()];
    layer.apply(x, &mut out);
    Ok(out)
}

/// LST block: `fc_row` is applied to every row of the input, `fc_col` to
/// every column of the intermediate. Both use tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct LstBlock<T> {
    pub fc_row: FcLayer<T>,
    pub fc_col: FcLayer<T>,
}

impl<T: Real> LstBlock<T> {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        LstBlock {
            fc_row: FcLayer::zeros(d_in, d_out, Activation::Tanh),
            fc_col: FcLayer::zeros(d_in, d_out, Activation::Tanh),
        }
    }

    #[inline]
    pub fn d_in(&self) -> usize {
        self.fc_row.d_in()
    }

    #[inline]
    pub fn d_out(&self) -> usize {
        self.fc_row.d_out()
    }

    pub fn param_count(&self) -> usize {
        self.fc_row.param_count() + self.fc_col.param_count()
    }

    pub(crate) fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.rows() != self.d_in() || x.cols() != self.d_in() {
            return Err(Error::ShapeMismatch(format!(
                "lst input {}x{} != {0}x{0} expected {2}x{2}",
                x.rows(),
                x.cols(),
                self.d_in()
            )));
        }
        Ok(())
    }
}

/// Row pass of the LST block: `V[k,:] = tanh(W1 X[k,:] + b1)` for every
/// row `k`. Exposed separately because the backward pass and the
/// fixed-point datapath both mirror this structure.
pub fn lst_row_pass<T: Real>(block: &LstBlock<T>, x: &Matrix<T>) -> Matrix<T> {
    let (d_in, d_out) = (block.d_in(), block.d_out());
    let mut v = Matrix::zeros(d_in, d_out);
    for k in 0..d_in {
        block.fc_row.apply(x.row(k), v.row_mut(k));
    }
    v
}

/// Column pass: `Y[:,k] = tanh(W2 V[:,k] + b2)` for every column `k`.
pub fn lst_col_pass<T: Real>(block: &LstBlock<T>, v: &Matrix<T>) -> Matrix<T> {
    let (d_in, d_out) = (block.d_in(), block.d_out());
    let mut y = Matrix::zeros(d_out, d_out);
    let mut colbuf = vec![T::zero(); d_in];
    let mut outbuf = vec![T::zero(); d_out];
    for k in 0..d_out {
        for r in 0..d_in {
            colbuf[r] = v[(r, k)];
        }
        block.fc_col.apply(&colbuf, &mut outbuf);
        y.set_col(k, &outbuf);
    }
    y
}

/// LST forward in the row-then-column loop form.
pub fn lst_forward<T: Real>(block: &LstBlock<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    block.check_input(x)?;
    Ok(lst_col_pass(block, &lst_row_pass(block, x)))
}

/// LST forward in the closed matrix form
/// `Y = tanh(W2 * tanh(X * W1^T + 1 b1^T) + b2 1^T)`.
///
/// Kept as an independent route to the same result; tests require the two
/// forms to agree to floating-point accuracy.
pub fn lst_forward_matrix<T: Real>(block: &LstBlock<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    block.check_input(x)?;
    let (d_in, d_out) = (block.d_in(), block.d_out());
    let mut z1 = x.matmul(&block.fc_row.w.transpose());
    for r in 0..d_in {
        for c in 0..d_out {
            z1[(r, c)] = z1[(r, c)] + block.fc_row.b[c];
        }
    }
    let v = z1.map(|e| e.tanh());
    let mut z2 = block.fc_col.w.matmul(&v);
    for r in 0..d_out {
        for c in 0..d_out {
            z2[(r, c)] = z2[(r, c)] + block.fc_col.b[r];
        }
    }
    Ok(z2.map(|e| e.tanh()))
}

/// Residual LST: `Y = lst(X) + X`. Requires a square block
/// (`d_in == d_out`); no activation after the sum.
pub fn res_lst_forward<T: Real>(block: &LstBlock<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
    if block.d_in() != block.d_out() {
        return Err(Error::ShapeMismatch(format!(
            "residual block needs d_in == d_out, got {} -> {}",
            block.d_in(),
            block.d_out()
        )));
    }
    Ok(lst_forward(block, x)?.add(x))
}

/// Row-major flatten: element `(i, j)` of a `d x d` matrix lands at index
/// `i * d + j`.
pub fn flatten<T: Real>(x: &Matrix<T>) -> Vec<T> {
    x.as_slice().to_vec()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let max = z.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
