//! Sigmoid focal loss with soft targets, and softmax cross-entropy, each
//! with a closed-form gradient.

use crate::error::{Error, Result};
use crate::numeric::{self, softplus, CompensatedSum};
use crate::tensor::{softmax, Tensor};

/// Summed per-class sigmoid focal loss of one logit row, writing the
/// gradient into `grad` (overwritten).
///
/// For logit `x`, target weight `t` and `p = sigmoid(x)`:
/// `t (1-p)^g (-ln p) + (1-t) p^g (-ln(1-p))`. With `g = 0` this is
/// binary cross-entropy.
pub fn focal_row(logits: &[f64], target: &[f64], gamma: f64, grad: &mut [f64]) -> f64 {
    debug_assert_eq!(logits.len(), target.len());
    debug_assert_eq!(logits.len(), grad.len());
    let mut loss = CompensatedSum::new();
    for ((&x, &t), g) in logits.iter().zip(target).zip(grad.iter_mut()) {
        let p = numeric::sigmoid(x);
        let q = numeric::sigmoid(-x);
        let neg_log_p = softplus(-x);
        let neg_log_q = softplus(x);
        let wp = q.powf(gamma);
        let wn = p.powf(gamma);
        loss.add(t * wp * neg_log_p + (1.0 - t) * wn * neg_log_q);
        *g = t * wp * (-gamma * p * neg_log_p - q) + (1.0 - t) * wn * (p + gamma * q * neg_log_q);
    }
    loss.value()
}

/// Softmax cross-entropy of one row against a target distribution,
/// writing the gradient into `grad`.
pub fn softmax_ce_row(logits: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + numeric::sum(logits.iter().map(|&v| (v - max).exp())).ln();
    let mass = numeric::sum(target.iter().copied());
    let mut loss = CompensatedSum::new();
    for (((&x, &t), &p), g) in logits.iter().zip(target).zip(&probs).zip(grad.iter_mut()) {
        loss.add(t * (lse - x));
        *g = mass * p - t;
    }
    loss.value()
}

fn check_same_shape(logits: &Tensor, target: &Tensor) -> Result<()> {
    if logits.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            left: logits.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    Ok(())
}

/// Focal loss summed over every element of `logits`, with its gradient.
pub fn focal_loss(logits: &Tensor, target: &Tensor, gamma: f64) -> Result<(f64, Tensor)> {
    check_same_shape(logits, target)?;
    let mut grad = vec![0.0; logits.len()];
    let loss = focal_row(logits.data(), target.data(), gamma, &mut grad);
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// Softmax cross-entropy over the last axis, summed over rows, with its
/// gradient.
pub fn softmax_cross_entropy(logits: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    check_same_shape(logits, target)?;
    let width = *logits.shape().last().expect("tensors have rank >= 1");
    let mut grad = vec![0.0; logits.len()];
    let mut loss = CompensatedSum::new();
    for ((x, t), g) in logits
        .data()
        .chunks(width)
        .zip(target.data().chunks(width))
        .zip(grad.chunks_mut(width))
    {
        loss.add(softmax_ce_row(x, t, g));
    }
    Ok((loss.value(), Tensor::new(logits.shape().to_vec(), grad)?))
}
