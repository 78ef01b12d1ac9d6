//! Adam with bias correction and coupled L2 weight decay (the decay term
//! is added to the gradient *before* the moment updates, so it flows
//! through both moments rather than being applied directly to the weights).

use crate::error::{Error, Result};
use crate::matrix::Real;
use crate::model::ModelParams;

use super::grad::Gradients;

#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
}

impl<T: Real> AdamState<T> {
    /// Fresh state with standard betas (0.9, 0.999) and eps 1e-8.
    pub fn new(params: &ModelParams<T>, lr: T, weight_decay: T) -> Self {
        AdamState {
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            eps: T::from_f64(1e-8),
            weight_decay,
        }
    }
}

/// One optimizer step, updating `params` and the moments in place.
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
) -> Result<()> {
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let (lr, eps, wd) = (state.lr, state.eps, state.weight_decay);
    let bc1 = T::one() - b1.powi(state.t as i32);
    let bc2 = T::one() - b2.powi(state.t as i32);

    let pt = params.tensors_mut();
    let gt = grads.tensors();
    let mt = state.m.tensors_mut();
    let vt = state.v.tensors_mut();
    if pt.len() != gt.len() || pt.len() != mt.len() || pt.len() != vt.len() {
        return Err(Error::ShapeMismatch(
            "optimizer state does not match params".into(),
        ));
    }
    for (((p, g), m), v) in pt.into_iter().zip(gt).zip(mt).zip(vt) {
        if p.len() != g.len() || p.len() != m.len() || p.len() != v.len() {
            return Err(Error::ShapeMismatch(
                "tensor size mismatch in adam_step".into(),
            ));
        }
        for k in 0..p.len() {
            let gk = g[k] + wd * p[k];
            m[k] = b1 * m[k] + (T::one() - b1) * gk;
            v[k] = b2 * v[k] + (T::one() - b2) * gk * gk;
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            p[k] = p[k] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
