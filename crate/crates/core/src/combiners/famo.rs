use super::softmax;
use crate::error::{Error, Result};
use crate::types::{dot, GradWeights, LossVector, WeightConstraint};

fn shifted(losses: &LossVector, eps: f64) -> Result<Vec<f64>> {
    losses
        .values()
        .iter()
        .map(|l| {
            let v = l + eps;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::InvalidArgument(format!(
                    "loss {l} is not positive after the eps shift"
                )))
            }
        })
        .collect()
}

/// FAMO loss weights: `c_i = softmax(xi)_i / (L_i + eps)`, normalized onto
/// the simplex, so that the weighted step acts on log-losses.
pub fn famo_weights(losses: &LossVector, logits: &[f64], eps: f64) -> Result<GradWeights> {
    if losses.len() != logits.len() {
        return Err(Error::Shape(format!(
            "{} losses for {} logits",
            losses.len(),
            logits.len()
        )));
    }
    let l = shifted(losses, eps)?;
    let c: Vec<f64> = softmax(logits).iter().zip(&l).map(|(w, l)| w / l).collect();
    let total: f64 = c.iter().sum();
    GradWeights::new(
        c.into_iter().map(|v| v / total).collect(),
        WeightConstraint::Simplex,
    )
}

/// Logit update once the step has been taken: with log-loss improvements
/// `delta_i = log(prev_i + eps) - log(new_i + eps)`, descend
/// `xi <- xi - lr * J^T delta` (J the softmax Jacobian), which moves weight
/// toward the tasks that improved least.
pub fn famo_update(
    logits: &[f64],
    previous: &LossVector,
    current: &LossVector,
    lr: f64,
    eps: f64,
) -> Result<Vec<f64>> {
    if previous.len() != logits.len() || current.len() != logits.len() {
        return Err(Error::Shape(
            "FAMO losses and logits differ in length".into(),
        ));
    }
    let prev = shifted(previous, eps)?;
    let curr = shifted(current, eps)?;
    let delta: Vec<f64> = prev
        .iter()
        .zip(&curr)
        .map(|(p, c)| p.ln() - c.ln())
        .collect();
    let w = softmax(logits);
    let mean = dot(&w, &delta);
    Ok(logits
        .iter()
        .zip(w.iter().zip(&delta))
        .map(|(xi, (wi, di))| xi - lr * wi * (di - mean))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[f64]) -> LossVector {
        LossVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_at_zero_logits() {
        assert_eq!(softmax(&[0.0, 0.0, 0.0]), vec![1.0 / 3.0; 3]);
        let c = famo_weights(&lv(&[1.0, 1.0]), &[0.0, 0.0], 1e-8).unwrap();
        assert_eq!(c.values(), &[0.5, 0.5]);
    }

    #[test]
    fn inverse_loss_weighting() {
        let c = famo_weights(&lv(&[1.0, 3.0]), &[0.0, 0.0], 0.0).unwrap();
        assert!((c.values()[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn equal_improvement_leaves_logits() {
        let xi = [0.3, -0.2, 0.1];
        let next = famo_update(
            &xi,
            &lv(&[2.0, 4.0, 6.0]),
            &lv(&[1.0, 2.0, 3.0]),
            0.025,
            0.0,
        )
        .unwrap();
        for (a, b) in next.iter().zip(&xi) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn slower_task_gains_weight() {
        let next =
            famo_update(&[0.0, 0.0], &lv(&[1.0, 1.0]), &lv(&[0.5, 0.9]), 0.025, 1e-8).unwrap();
        assert!(next[1] > next[0]);
    }

    #[test]
    fn rejects_nonpositive_losses() {
        assert!(famo_weights(&lv(&[-1.0, 1.0]), &[0.0, 0.0], 1e-8).is_err());
    }
}
