//! Finite-difference validation of the analytic gradients.
//!
//! The check runs entirely in `f64`: analytic gradients come from one
//! forward/backward pass, and each probed parameter is then perturbed by
//! `±step` for a central-difference estimate of the same derivative. The
//! two must agree to a relative error of about the step size squared; the
//! shipped threshold is 1e-4 with `step = 1e-4`, far above the noise floor
//! of a correct implementation and far below what any sign or indexing
//! mistake produces.

use super::BavitModel;
use crate::loss::{accumulative_ce, ce_loss_and_grad, softmax_tokens};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Relative-error budget a correct backward pass must meet.
pub const REL_ERR_BUDGET: f64 = 1e-4;
/// Denominator floor: below this magnitude the comparison is effectively
/// absolute. The floor is calibrated to what the step can resolve: central
/// differences carry a truncation error of about `step^2 * f'''/6`, an
/// absolute quantity near 1e-7..1e-6 here that does not shrink with the
/// gradient. Against gradients smaller than `DENOM_FLOOR` that truncation
/// alone would breach [`REL_ERR_BUDGET`], so below the floor a mismatch
/// must exceed `REL_ERR_BUDGET * DENOM_FLOOR = 1e-6` in absolute terms —
/// still far below anything a sign or indexing mistake produces.
pub const DENOM_FLOOR: f64 = 1e-2;

/// Worst observed disagreement for one probed parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub finite_diff: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub worst: Option<WorstCase>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < REL_ERR_BUDGET
    }
}

fn rel_err(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / a.abs().max(fd.abs()).max(DENOM_FLOOR)
}

fn loss_of(model: &BavitModel<f64>, x: &[f64], labels: &[u8], batch: usize) -> f64 {
    let out = model.forward(x, batch);
    accumulative_ce(&softmax_tokens(&out.logits), labels)
}

/// Compares analytic and central-difference gradients on `per_tensor`
/// randomly probed elements of every tensor (`0` probes every element).
pub fn finite_difference_check(
    model: &mut BavitModel<f64>,
    x: &[f64],
    labels: &[u8],
    batch: usize,
    step: f64,
    per_tensor: usize,
    rng: &mut ChaCha8Rng,
) -> GradCheckReport {
    let out = model.forward(x, batch);
    let (_, d_logits) = ce_loss_and_grad(&out.logits, labels);
    let grads = model.backward(&out.cache, &d_logits);
    drop(out);

    let specs = super::tensor_specs(&model.cfg);
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().cloned().collect();

    let mut checked = 0usize;
    let mut max_err = 0.0f64;
    let mut sum_err = 0.0f64;
    let mut worst: Option<WorstCase> = None;
    for (ti, spec) in specs.iter().enumerate() {
        let len = spec.len();
        let indices: Vec<usize> = if per_tensor == 0 || per_tensor >= len {
            (0..len).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..len)).collect()
        };
        for idx in indices {
            let orig = model.params.tensors()[ti][idx];
            model.params.tensors_mut()[ti][idx] = orig + step;
            let plus = loss_of(model, x, labels, batch);
            model.params.tensors_mut()[ti][idx] = orig - step;
            let minus = loss_of(model, x, labels, batch);
            model.params.tensors_mut()[ti][idx] = orig;
            let fd = (plus - minus) / (2.0 * step);
            let a = analytic[ti][idx];
            let err = rel_err(a, fd);
            checked += 1;
            sum_err += err;
            if err > max_err {
                max_err = err;
                worst = Some(WorstCase {
                    tensor: spec.name.clone(),
                    index: idx,
                    analytic: a,
                    finite_diff: fd,
                    rel_err: err,
                });
            }
        }
    }
    GradCheckReport {
        checked,
        max_rel_err: max_err,
        mean_rel_err: if checked > 0 {
            sum_err / checked as f64
        } else {
            0.0
        },
        worst,
    }
}
