//! Accumulative cross-entropy over every token of every image in a batch.
//!
//! The classifier emits two logits per token (class 0 = background, class
//! 1 = foreground). The loss is the mean negative log-likelihood over all
//! `batch * tokens` token positions at once — one scalar per batch rather
//! than per image — and its gradient with respect to the logits is the
//! familiar `(softmax - one_hot) / n` closed form.

use crate::linalg::Real;

/// Number of token classes; the whole pipeline is binary.
pub const NUM_CLASSES: usize = 2;

/// Row-wise stable softmax over `[n, NUM_CLASSES]` logits.
pub fn softmax_tokens<F: Real>(logits: &[F]) -> Vec<F> {
    debug_assert_eq!(logits.len() % NUM_CLASSES, 0);
    let mut probs = logits.to_vec();
    crate::linalg::softmax_rows_inplace(&mut probs, NUM_CLASSES);
    probs
}

/// Mean `-ln p(true class)` over all token positions. Probabilities are
/// floored at `1e-12` so a saturated wrong prediction yields a large finite
/// loss instead of infinity.
pub fn accumulative_ce<F: Real>(probs: &[F], labels: &[u8]) -> F {
    debug_assert_eq!(probs.len(), labels.len() * NUM_CLASSES);
    assert!(!labels.is_empty(), "loss over zero tokens");
    let floor = F::from_f64(1e-12);
    let mut total = F::zero();
    for (i, &label) in labels.iter().enumerate() {
        let p = probs[i * NUM_CLASSES + label as usize].max(floor);
        total -= p.ln();
    }
    total / F::from_f64(labels.len() as f64)
}

/// Gradient of [`accumulative_ce`] with respect to the logits:
/// `(p - one_hot) / n` at every token position.
pub fn accumulative_ce_grad<F: Real>(probs: &[F], labels: &[u8]) -> Vec<F> {
    debug_assert_eq!(probs.len(), labels.len() * NUM_CLASSES);
    let inv_n = F::one() / F::from_f64(labels.len() as f64);
    let mut grad = Vec::with_capacity(probs.len());
    for (i, &label) in labels.iter().enumerate() {
        for c in 0..NUM_CLASSES {
            let indicator = if c == label as usize {
                F::one()
            } else {
                F::zero()
            };
            grad.push((probs[i * NUM_CLASSES + c] - indicator) * inv_n);
        }
    }
    grad
}

/// Convenience wrapper: softmax, loss, and logit gradient in one call.
pub fn ce_loss_and_grad<F: Real>(logits: &[F], labels: &[u8]) -> (F, Vec<F>) {
    let probs = softmax_tokens(logits);
    let loss = accumulative_ce(&probs, labels);
    let grad = accumulative_ce_grad(&probs, labels);
    (loss, grad)
}
