//! Softmax decision rule, sparse categorical cross-entropy and the Adam update.

use thiserror::Error;

use crate::linalg::{Matrix, Vector};
use crate::nn::{LstmParams, ParamGrads};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LossError {
    #[error("label {label} at row {row} is outside [0, {classes})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("{labels} labels for a batch of {rows} logit rows")]
    LengthMismatch { rows: usize, labels: usize },
}

/// Max-shifted softmax of one logit row.
pub fn softmax_slice<T: Scalar>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = z.iter().map(|&x| (x - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax<T: Scalar>(logits: &Vector<T>) -> Vector<T> {
    Vector::from(softmax_slice(logits.as_slice()))
}

/// Row-wise softmax.
pub fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let p = softmax_slice(logits.row(r));
        out.row_mut(r).copy_from_slice(&p);
    }
    out
}

pub fn argmax<T: Scalar>(z: &[T]) -> usize {
    let mut best = 0;
    for (k, &x) in z.iter().enumerate() {
        if x > z[best] {
            best = k;
        }
    }
    best
}

/// Mean cross-entropy over the batch and its gradient on the logits,
/// `(softmax(logits) - one_hot(labels)) / batch`.
pub fn sparse_cce<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>), LossError> {
    let (rows, classes) = logits.shape();
    if labels.len() != rows {
        return Err(LossError::LengthMismatch {
            rows,
            labels: labels.len(),
        });
    }
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(LossError::LabelOutOfRange { row, label, classes });
    }
    let n = T::of(rows as f64);
    let mut loss = T::zero();
    let mut grad = logits.clone();
    for (r, &label) in labels.iter().enumerate() {
        let z = logits.row(r);
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum = z.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        // -log p_label, computed in log space
        loss = loss + (log_sum - (z[label] - max));
        let p = softmax_slice(z);
        let g = grad.row_mut(r);
        for (k, (gk, pk)) in g.iter_mut().zip(p).enumerate() {
            let target = if k == label { T::one() } else { T::zero() };
            *gk = (pk - target) / n;
        }
    }
    Ok((loss / n, grad))
}

/// Adam hyperparameters and moment estimates for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub step: u64,
    pub m: LstmParams<T>,
    pub v: LstmParams<T>,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> OptimizerState<T> {
    pub const DEFAULT_BETA1: f64 = 0.9;
    pub const DEFAULT_BETA2: f64 = 0.999;
    pub const DEFAULT_EPSILON: f64 = 1e-7;

    /// Fresh state with β₁ = 0.9, β₂ = 0.999, ε = 1e-7.
    pub fn new(params: &LstmParams<T>, learning_rate: T) -> Self {
        Self {
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
            learning_rate,
            beta1: T::of(Self::DEFAULT_BETA1),
            beta2: T::of(Self::DEFAULT_BETA2),
            epsilon: T::of(Self::DEFAULT_EPSILON),
        }
    }
}

/// Applies `scale` to `grads` so the global L2 norm does not exceed `max_norm`.
pub fn clip_global_norm<T: Scalar>(grads: &mut ParamGrads<T>, max_norm: T) -> T {
    let norm = grads.global_norm();
    if norm > max_norm && norm > T::zero() {
        grads.scale_in_place(max_norm / norm);
    }
    norm
}

/// One bias-corrected Adam update, in place.
///
/// # Panics
/// If `grads` or the moment buffers do not share the layout of `params`.
pub fn adam_step<T: Scalar>(params: &mut LstmParams<T>, grads: &ParamGrads<T>, state: &mut OptimizerState<T>) {
    assert!(
        params.same_shape(grads) && params.same_shape(&state.m) && params.same_shape(&state.v),
        "Adam buffers do not match the parameter layout"
    );
    state.step += 1;
    let one = T::one();
    let (b1, b2) = (state.beta1, state.beta2);
    let t = state.step as i32;
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;
    let blocks = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut());
    for (((theta, g), m), v) in blocks {
        for k in 0..theta.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + (one - b1) * gk;
            v[k] = b2 * v[k] + (one - b2) * gk * gk;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            theta[k] = theta[k] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
