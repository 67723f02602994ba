//! Softmax, sigmoid and the losses built on them.

use crate::scalar::Scalar;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against class `target`, and its
/// gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln() + max;
    let loss = log_sum - logits[target];
    let mut grad = probs;
    grad[target] -= T::one();
    (loss, grad)
}

/// Binary cross-entropy on a logit; returns (loss, d loss / d logit).
pub fn bce_with_logit<T: Scalar>(logit: T, target: T) -> (T, T) {
    // log(1 + e^-|z|) + max(z, 0) - z * t
    let zero = T::zero();
    let loss = (T::one() + (-logit.abs()).exp()).ln() + logit.max(zero) - logit * target;
    (loss, sigmoid(logit) - target)
}
