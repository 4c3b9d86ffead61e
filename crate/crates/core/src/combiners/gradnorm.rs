use crate::error::{Error, Result};
use crate::types::{GradWeights, LossVector, TaskGradients, WeightConstraint};

const LOSS_FLOOR: f64 = 1e-8;
const WEIGHT_FLOOR: f64 = 1e-6;

/// One GradNorm step on the loss weights.
///
/// Weighted norms `n_i = w_i |g_i|` are pulled towards
/// `mean(n) * r_i^gamma`, where `r_i` is task i's loss ratio to its initial
/// loss relative to the average ratio. The step is a subgradient step on
/// `sum |n_i - t_i|` with the targets held fixed; weights are floored at a
/// small positive value and rescaled to sum to `T`.
pub fn gradnorm(
    g: &TaskGradients,
    losses: &LossVector,
    initial: &LossVector,
    weights: &GradWeights,
    gamma: f64,
    lr: f64,
) -> Result<GradWeights> {
    let t = g.tasks();
    if losses.len() != t || initial.len() != t || weights.len() != t {
        return Err(Error::Shape(format!(
            "gradnorm expects {t} losses and weights"
        )));
    }
    let norms = g.norms();
    let n: Vec<f64> = weights
        .values()
        .iter()
        .zip(&norms)
        .map(|(w, g)| w * g)
        .collect();
    let mean_n = n.iter().sum::<f64>() / t as f64;
    let ratios: Vec<f64> = losses
        .values()
        .iter()
        .zip(initial.values())
        .map(|(l, l0)| l / if *l0 <= 0.0 { LOSS_FLOOR } else { *l0 })
        .collect();
    let mean_ratio = ratios.iter().sum::<f64>() / t as f64;

    let mut next: Vec<f64> = (0..t)
        .map(|i| {
            let rate = if mean_ratio > 0.0 {
                ratios[i] / mean_ratio
            } else {
                1.0
            };
            let target = mean_n * rate.powf(gamma);
            let diff = n[i] - target;
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            (weights.values()[i] - lr * sign * norms[i]).max(WEIGHT_FLOOR)
        })
        .collect();
    let scale = t as f64 / next.iter().sum::<f64>();
    next.iter_mut().for_each(|w| *w *= scale);
    GradWeights::new(next, WeightConstraint::SumT)
}
