use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autograd::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWParams {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamWParams {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl AdamWState {
    pub fn new(params: &[&Matrix]) -> Self {
        let zeros = |p: &&Matrix| Matrix::zeros(p.rows(), p.cols());
        Self {
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }
}

/// One AdamW update with decoupled weight decay:
///
/// ```text
/// p ← p − lr·wd·p
/// m ← β₁m + (1−β₁)g,   v ← β₂v + (1−β₂)g²
/// p ← p − lr · m̂ / (√v̂ + eps)
/// ```
///
/// Parameters whose `trainable` flag is false are left untouched.
pub fn adamw_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamWState,
    hp: &AdamWParams,
    trainable: Option<&[bool]>,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(TrainError::ShapeMismatch(format!(
                "parameter {i}: {:?} vs grad {:?} vs state {:?}",
                p.shape(),
                g.shape(),
                state.m[i].shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if trainable.is_some_and(|mask| !mask[i]) {
            continue;
        }
        let m = state.m[i].as_mut_slice();
        let v = state.v[i].as_mut_slice();
        for (k, (w, &gk)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
            *w -= hp.lr * hp.weight_decay * *w;
            m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * gk;
            v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * gk * gk;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *w -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    Ok(())
}
