//! Reverse-mode gradients for every stage type.
//!
//! An LST block applies its row FC layer once per input row and its column
//! FC layer once per output column, so each weight gradient accumulates one
//! contribution per application. Accumulation order is fixed — ascending
//! row index, then ascending column index — and batches reduce over fixed
//! 32-sample chunks in index order, so results are bit-reproducible
//! regardless of how many worker threads run.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix, Real};
use crate::mnist::Minibatch;
use crate::model::layers::{
    fc_forward, flatten, lst_col_pass, lst_row_pass, Activation, FcLayer, LstBlock,
};
use crate::model::{ModelParams, ModelSpec, StageParams, StageValue, NUM_CLASSES};

/// Samples per work unit in a batch reduction. Fixing this (instead of
/// letting the thread pool pick split points) keeps the floating-point
/// summation order independent of the thread count.
pub const GRAD_CHUNK: usize = 32;

/// Per-stage gradient tensors, shaped exactly like the parameters they
/// belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T>(pub ModelParams<T>);

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        Gradients(params.zeros_like())
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        self.0.tensors()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.0.tensors_mut()
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            for g in t {
                *g = *g * s;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (t, o) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(T::one(), o, t);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|g| g.is_finite()))
    }
}

/// Cached intermediates from one sample's forward pass, one entry per stage.
enum TraceStage<T> {
    /// `v` is the row-pass output, `y` the column-pass output.
    Lst {
        x: Matrix<T>,
        v: Matrix<T>,
        y: Matrix<T>,
    },
    /// Same as `Lst`; the stage output is `y + x` but only the branch
    /// output `y` is needed for the tanh derivative.
    ResLst {
        x: Matrix<T>,
        v: Matrix<T>,
        y: Matrix<T>,
    },
    Flatten {
        side: usize,
    },
    /// `y` is post-activation.
    Fc {
        x: Vec<T>,
        y: Vec<T>,
    },
}

/// Forward pass that keeps what the backward pass needs.
fn traced_forward<T: Real>(
    params: &ModelParams<T>,
    input: &Matrix<T>,
) -> Result<(Vec<TraceStage<T>>, Vec<T>)> {
    let mut trace = Vec::with_capacity(params.stages.len());
    let mut value = StageValue::Image(input.clone());
    for stage in &params.stages {
        value = match (stage, value) {
            (StageParams::Lst(b), StageValue::Image(x)) => {
                b.check_input(&x)?;
                let v = lst_row_pass(b, &x);
                let y = lst_col_pass(b, &v);
                let out = y.clone();
                trace.push(TraceStage::Lst { x, v, y });
                StageValue::Image(out)
            }
            (StageParams::ResLst(b), StageValue::Image(x)) => {
                b.check_input(&x)?;
                let v = lst_row_pass(b, &x);
                let y = lst_col_pass(b, &v);
                let out = y.add(&x);
                trace.push(TraceStage::ResLst { x, v, y });
                StageValue::Image(out)
            }
            (StageParams::Flatten, StageValue::Image(x)) => {
                let side = x.rows();
                let out = flatten(&x);
                trace.push(TraceStage::Flatten { side });
                StageValue::Vector(out)
            }
            (StageParams::Fc(l), StageValue::Vector(x)) => {
                let y = fc_forward(l, &x)?;
                let out = y.clone();
                trace.push(TraceStage::Fc { x, y });
                StageValue::Vector(out)
            }
            _ => {
                return Err(Error::ShapeMismatch(
                    "stage cannot consume its input".into(),
                ))
            }
        };
    }
    match value {
        StageValue::Vector(logits) if logits.len() == NUM_CLASSES => Ok((trace, logits)),
        _ => Err(Error::SpecInvalid("model did not end in 10 logits".into())),
    }
}

pub(crate) fn log_sum_exp<T: Real>(z: &[T]) -> T {
    let max = z.iter().cloned().fold(T::neg_infinity(), T::max);
    let sum: T = z.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Backward through one LST application given its trace. Accumulates the
/// four parameter gradients into `grad` and returns the input gradient
/// unless `want_dx` is false (first stage, nothing upstream needs it).
fn lst_backward<T: Real>(
    block: &LstBlock<T>,
    x: &Matrix<T>,
    v: &Matrix<T>,
    y: &Matrix<T>,
    g: &Matrix<T>,
    grad: &mut LstBlock<T>,
    want_dx: bool,
) -> Option<Matrix<T>> {
    let (n, m) = (block.d_in(), block.d_out());

    // column pass: Y[:,k] = tanh(W2 V[:,k] + b2)
    let mut d2 = Matrix::zeros(m, m);
    for r in 0..m {
        for c in 0..m {
            let yy = y[(r, c)];
            d2[(r, c)] = g[(r, c)] * (T::one() - yy * yy);
        }
    }
    // dW2[i,j] = sum over column applications k of d2[i,k] v[j,k]
    for i in 0..m {
        for j in 0..n {
            grad.fc_col.w[(i, j)] = grad.fc_col.w[(i, j)] + dot(d2.row(i), v.row(j));
        }
    }
    for i in 0..m {
        let s: T = d2.row(i).iter().cloned().sum();
        grad.fc_col.b[i] = grad.fc_col.b[i] + s;
    }
    // dV = W2^T D2
    let mut dv = Matrix::zeros(n, m);
    for i in 0..m {
        for r in 0..n {
            axpy(block.fc_col.w[(i, r)], d2.row(i), dv.row_mut(r));
        }
    }

    // row pass: V[k,:] = tanh(W1 X[k,:] + b1); reuse dv storage for D1
    let mut d1 = dv;
    for r in 0..n {
        for c in 0..m {
            let vv = v[(r, c)];
            d1[(r, c)] = d1[(r, c)] * (T::one() - vv * vv);
        }
    }
    // dW1[j,:] accumulates d1[k,j] X[k,:] over row applications k
    for k in 0..n {
        let xr = x.row(k);
        for j in 0..m {
            axpy(d1[(k, j)], xr, grad.fc_row.w.row_mut(j));
        }
    }
    for j in 0..m {
        let mut s = T::zero();
        for k in 0..n {
            s = s + d1[(k, j)];
        }
        grad.fc_row.b[j] = grad.fc_row.b[j] + s;
    }

    want_dx.then(|| d1.matmul(&block.fc_row.w))
}

fn fc_backward<T: Real>(
    layer: &FcLayer<T>,
    x: &[T],
    y: &[T],
    g: &[T],
    grad: &mut FcLayer<T>,
    want_dx: bool,
) -> Option<Vec<T>> {
    let dz: Vec<T> = match layer.activation {
        Activation::None => g.to_vec(),
        Activation::Tanh => y
            .iter()
            .zip(g)
            .map(|(&yy, &gg)| gg * (T::one() - yy * yy))
            .collect(),
    };
    for (i, &d) in dz.iter().enumerate() {
        axpy(d, x, grad.w.row_mut(i));
        grad.b[i] = grad.b[i] + d;
    }
    want_dx.then(|| {
        let mut dx = vec![T::zero(); layer.d_in()];
        for (i, &d) in dz.iter().enumerate() {
            axpy(d, layer.w.row(i), &mut dx);
        }
        dx
    })
}

/// One sample's loss; its parameter gradients are accumulated (not
/// averaged) into `grads`. With `want_input_grad` the loss gradient with
/// respect to the input image is computed and returned too; otherwise that
/// work is skipped at the first stage.
fn backward_sample<T: Real>(
    params: &ModelParams<T>,
    x: &Matrix<T>,
    label: u8,
    grads: &mut Gradients<T>,
    want_input_grad: bool,
) -> Result<(T, Option<Matrix<T>>)> {
    let (trace, logits) = traced_forward(params, x)?;
    if label as usize >= logits.len() {
        return Err(Error::BadLabel(label));
    }
    let lse = log_sum_exp(&logits);
    let loss = lse - logits[label as usize];
    // softmax minus one-hot
    let mut g: Vec<T> = logits.iter().map(|&z| (z - lse).exp()).collect();
    g[label as usize] = g[label as usize] - T::one();

    let mut delta = StageValue::Vector(g);
    for i in (0..params.stages.len()).rev() {
        let want_dx = i > 0 || want_input_grad;
        let next = match (&params.stages[i], &trace[i], &mut grads.0.stages[i], delta) {
            (
                StageParams::Lst(b),
                TraceStage::Lst { x, v, y },
                StageParams::Lst(gb),
                StageValue::Image(g),
            ) => lst_backward(b, x, v, y, &g, gb, want_dx).map(StageValue::Image),
            (
                StageParams::ResLst(b),
                TraceStage::ResLst { x, v, y },
                StageParams::ResLst(gb),
                StageValue::Image(g),
            ) => {
                // skip path: the stage output also feeds straight from x
                lst_backward(b, x, v, y, &g, gb, want_dx).map(|dx| StageValue::Image(dx.add(&g)))
            }
            (StageParams::Flatten, TraceStage::Flatten { side }, _, StageValue::Vector(g)) => {
                Some(StageValue::Image(Matrix::from_vec(*side, *side, g)))
            }
            (
                StageParams::Fc(l),
                TraceStage::Fc { x, y },
                StageParams::Fc(gl),
                StageValue::Vector(g),
            ) => fc_backward(l, x, y, &g, gl, want_dx).map(StageValue::Vector),
            _ => {
                return Err(Error::ShapeMismatch(
                    "trace does not match parameters".into(),
                ))
            }
        };
        match next {
            Some(d) => delta = d,
            // only the first stage skips its input gradient, and all its
            // parameter gradients are already accumulated
            None => return Ok((loss, None)),
        }
    }
    if !want_input_grad {
        return Ok((loss, None));
    }
    match delta {
        StageValue::Image(dx) => Ok((loss, Some(dx))),
        StageValue::Vector(_) => Err(Error::ShapeMismatch(
            "input gradient did not end as an image".into(),
        )),
    }
}

/// Gradient of one sample's loss with respect to the input pixels.
pub fn input_gradient<T: Real>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    x: &Matrix<T>,
    label: u8,
) -> Result<Matrix<T>> {
    params.congruent_with(spec)?;
    let mut scratch = Gradients::zeros_like(params);
    let (_, dx) = backward_sample(params, x, label, &mut scratch, true)?;
    Ok(dx.expect("requested input gradient"))
}

/// Mean loss and mean parameter gradients over a batch.
pub fn backward<T: Real>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    batch: &Minibatch<T>,
) -> Result<(T, Gradients<T>)> {
    params.congruent_with(spec)?;
    let n = batch.images.len();
    if n == 0 || batch.labels.len() != n {
        return Err(Error::Invalid(format!(
            "batch with {n} images and {} labels",
            batch.labels.len()
        )));
    }

    let parts: Result<Vec<(T, Gradients<T>)>> = batch
        .images
        .par_chunks(GRAD_CHUNK)
        .zip(batch.labels.par_chunks(GRAD_CHUNK))
        .map(|(xs, ls)| {
            let mut g = Gradients::zeros_like(params);
            let mut loss = T::zero();
            for (x, &l) in xs.iter().zip(ls) {
                loss = loss + backward_sample(params, x, l, &mut g, false)?.0;
            }
            Ok((loss, g))
        })
        .collect();

    // ordered sequential reduce over the chunk results
    let mut loss = T::zero();
    let mut grads = Gradients::zeros_like(params);
    for (l, g) in parts? {
        loss = loss + l;
        grads.add_assign(&g);
    }
    let scale = T::one() / T::from_f64(n as f64);
    grads.scale(scale);
    Ok((loss * scale, grads))
}
