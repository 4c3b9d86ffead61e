use super::{Combination, Diagnostics, ZERO_NORM};
use crate::error::{Error, Result};
use crate::types::{axpy, dot, norm, SquareMatrix, TaskGradients};

/// Cosine targets are kept strictly inside (-1, 1).
pub const TARGET_CLAMP: f64 = 1.0 - 1e-6;

/// Gradient vaccine: whenever the cosine between `g_i'` and `g_j` falls
/// below the running target for that ordered pair, add just enough of `g_j`
/// to lift it back to the target. Targets follow an exponential moving
/// average of the observed cosines.
///
/// Pairs are visited in index order; the cosine and norm use the current
/// (already adjusted) `g_i'` and the original `g_j`.
pub fn gradvac(
    g: &TaskGradients,
    targets: &SquareMatrix,
    beta: f64,
) -> Result<(Combination, SquareMatrix)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta must lie in (0, 1), got {beta}"
        )));
    }
    let t = g.tasks();
    if targets.size() != t {
        return Err(Error::Shape(format!(
            "{}x{} target matrix for {t} tasks",
            targets.size(),
            targets.size()
        )));
    }
    let norms = g.norms();
    let mut next_targets = targets.clone();
    let mut direction = vec![0.0; g.dim()];
    let mut coefficients = vec![0.0; t];

    for i in 0..t {
        let mut adjusted = g.column(i).to_vec();
        coefficients[i] += 1.0;
        for j in 0..t {
            if j == i {
                continue;
            }
            let norm_i = norm(&adjusted);
            if norm_i < ZERO_NORM || norms[j] < ZERO_NORM {
                continue;
            }
            let cos = (dot(&adjusted, g.column(j)) / (norm_i * norms[j])).clamp(-1.0, 1.0);
            let target = targets[(i, j)].clamp(-TARGET_CLAMP, TARGET_CLAMP);
            if cos < target {
                let scale = norm_i
                    * (target * (1.0 - cos * cos).sqrt() - cos * (1.0 - target * target).sqrt())
                    / (norms[j] * (1.0 - target * target).sqrt());
                axpy(scale, g.column(j), &mut adjusted);
                coefficients[j] += scale;
            }
            next_targets[(i, j)] =
                ((1.0 - beta) * target + beta * cos).clamp(-TARGET_CLAMP, TARGET_CLAMP);
        }
        axpy(1.0, &adjusted, &mut direction);
    }
    let combination =
        Combination::direction(direction, Diagnostics::with_coefficients(coefficients))?;
    Ok((combination, next_targets))
}
