use rand::Rng;
use rand_distr::StandardNormal;

use super::{Combination, Diagnostics};
use crate::error::Result;
use crate::types::{GradWeights, TaskGradients, WeightConstraint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomMode {
    /// Weights multiply the shared-parameter gradients only.
    Gradient,
    /// Weights multiply the task losses, so head gradients scale too.
    Loss,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Random gradient / loss weighting: softmax of a standard normal draw.
pub fn random_weighting<R: Rng + ?Sized>(
    g: &TaskGradients,
    rng: &mut R,
    mode: RandomMode,
) -> Result<Combination> {
    let logits: Vec<f64> = (0..g.tasks()).map(|_| rng.sample(StandardNormal)).collect();
    let weights = softmax(&logits);
    match mode {
        RandomMode::Gradient => {
            let direction = g.combine(&weights);
            Combination::direction(direction, Diagnostics::with_coefficients(weights))
        }
        RandomMode::Loss => Ok(Combination::weights(
            GradWeights::new(weights, WeightConstraint::Simplex)?,
            Diagnostics::converged(),
        )),
    }
}
