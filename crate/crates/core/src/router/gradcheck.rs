//! Central finite-difference check of the analytic router gradients.

use serde::{Deserialize, Serialize};

use super::model::{compute_loss, forward, loss_and_logit_grad, Labels, LossWeights};
use super::params::RouterParams;
use crate::error::Result;

/// Denominator floor of [`relative_error`].
///
/// A central difference of a loss of size `L` carries rounding noise of
/// roughly `f64::EPSILON * L / h`, a few `1e-9` for the losses and steps
/// used here. Below `|g| ~ 1e-4` that noise alone exceeds a `1e-4` relative
/// tolerance, so smaller gradients are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Parameters compared.
    pub checked: usize,
    /// Parameters skipped because `θ ± h` straddles a ReLU or clamp kink,
    /// where the loss is not differentiable within the step.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Tensor name and flat index of the largest relative error.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        if other.max_rel_error > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }
}

/// Compares every analytic partial derivative of the loss at one sample
/// with `(L(θ + h) - L(θ - h)) / 2h`.
pub fn gradient_check(
    params: &RouterParams,
    question: &[f64],
    labels: &Labels,
    weights: LossWeights,
    step: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = compute_loss(params, question, labels, weights)?;
    let analytic: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
    let act = params.dims.activation;
    let mut probe = params.clone();
    let mut report = GradCheckReport::default();
    for (k, (name, a)) in analytic.iter().enumerate() {
        for (i, &ga) in a.iter().enumerate() {
            let original = probe.tensors()[k].1[i];
            set(&mut probe, k, i, original + step);
            let plus = forward(&probe, question)?;
            let plus_loss = loss_and_logit_grad(&plus.output, labels, weights)?.loss;
            set(&mut probe, k, i, original - step);
            let minus = forward(&probe, question)?;
            let minus_loss = loss_and_logit_grad(&minus.output, labels, weights)?.loss;
            set(&mut probe, k, i, original);
            if plus.activation_pattern(act) != minus.activation_pattern(act) {
                report.kinks += 1;
                continue;
            }
            let numeric = (plus_loss - minus_loss) / (2.0 * step);
            let rel = relative_error(ga, numeric);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((ga - numeric).abs());
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}

fn set(params: &mut RouterParams, tensor: usize, index: usize, value: f64) {
    params.tensors_mut()[tensor].1[index] = value;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9) - 1e-5).abs() < 1e-15);
    }
}
