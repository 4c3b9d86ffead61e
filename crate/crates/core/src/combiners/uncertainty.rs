use crate::error::{Error, Result};
use crate::types::{GradWeights, LossVector, WeightConstraint};

/// Log-variances are kept inside `[-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND]`.
pub const LOG_VARIANCE_BOUND: f64 = 10.0;

/// Homoscedastic uncertainty weighting on `sum_i exp(-s_i) L_i + s_i`.
///
/// Returns the current weights `exp(-s_i)` and the log-variances after one
/// gradient step.
pub fn uncertainty(
    losses: &LossVector,
    log_variances: &[f64],
    lr: f64,
) -> Result<(GradWeights, Vec<f64>)> {
    if losses.len() != log_variances.len() {
        return Err(Error::Shape(format!(
            "{} losses for {} log-variances",
            losses.len(),
            log_variances.len()
        )));
    }
    let weights: Vec<f64> = log_variances.iter().map(|s| (-s).exp()).collect();
    let next = log_variances
        .iter()
        .zip(&weights)
        .zip(losses.values())
        .map(|((s, w), l)| (s - lr * (1.0 - w * l)).clamp(-LOG_VARIANCE_BOUND, LOG_VARIANCE_BOUND))
        .collect();
    Ok((GradWeights::new(weights, WeightConstraint::Positive)?, next))
}
