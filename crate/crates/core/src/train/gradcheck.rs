//! Finite-difference verification of the analytic gradients.
//!
//! `batch_loss` goes through the plain forward path only, so the numeric
//! gradient shares no code with the reverse-mode pass it is checking.

use crate::error::Result;
use crate::matrix::Real;
use crate::mnist::Minibatch;
use crate::model::{model_forward, ModelParams, ModelSpec};

use super::{backward, cross_entropy};

/// Mean cross-entropy over a batch via forward passes alone.
pub fn batch_loss<T: Real>(
    spec: &ModelSpec,
    params: &ModelParams<T>,
    batch: &Minibatch<T>,
) -> Result<T> {
    let mut sum = T::zero();
    for (x, &label) in batch.images.iter().zip(&batch.labels) {
        let logits = model_forward(spec, params, x)?;
        sum = sum + cross_entropy(&logits, label)?;
    }
    Ok(sum / T::from_f64(batch.images.len() as f64))
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    /// Number of parameters compared.
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(tensor index, entry index)` of the worst parameter.
    pub worst: (usize, usize),
}

/// Compare every analytic gradient entry against a central difference
/// `(L(θ+h) − L(θ−h)) / 2h`.
///
/// The relative error denominator is floored at 1e-4 so near-zero entries
/// are effectively compared absolutely; below that scale a central
/// difference of a ~O(1) loss is dominated by cancellation noise.
pub fn gradient_check(
    spec: &ModelSpec,
    params: &ModelParams<f64>,
    batch: &Minibatch<f64>,
    h: f64,
) -> Result<GradCheckReport> {
    const DENOM_FLOOR: f64 = 1e-4;
    let (_, analytic) = backward(spec, params, batch)?;
    let mut work = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: (0, 0),
    };
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        for k in 0..params.tensors()[ti].len() {
            let orig = params.tensors()[ti][k];
            work.tensors_mut()[ti][k] = orig + h;
            let lp = batch_loss(spec, &work, batch)?;
            work.tensors_mut()[ti][k] = orig - h;
            let lm = batch_loss(spec, &work, batch)?;
            work.tensors_mut()[ti][k] = orig;

            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic.tensors()[ti][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(DENOM_FLOOR);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (ti, k);
            }
        }
    }
    Ok(report)
}
