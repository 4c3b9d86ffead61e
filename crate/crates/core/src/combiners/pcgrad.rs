use rand::seq::SliceRandom;
use rand::Rng;

use super::{Combination, Diagnostics, ZERO_NORM};
use crate::error::Result;
use crate::types::{axpy, dot, TaskGradients};

/// Gradient surgery: each task gradient is projected onto the normal plane
/// of every other task gradient it conflicts with.
///
/// One pass per task over the others in a shuffled order. Projections are
/// always taken against the original `g_j`.
pub fn pcgrad<R: Rng + ?Sized>(g: &TaskGradients, rng: &mut R) -> Result<Combination> {
    let t = g.tasks();
    let sq_norms: Vec<f64> = g.columns().map(|c| dot(c, c)).collect();
    let mut direction = vec![0.0; g.dim()];
    let mut coefficients = vec![0.0; t];

    for i in 0..t {
        let mut projected = g.column(i).to_vec();
        coefficients[i] += 1.0;
        let mut others: Vec<usize> = (0..t).filter(|&j| j != i).collect();
        others.shuffle(rng);
        for j in others {
            if sq_norms[j] < ZERO_NORM * ZERO_NORM {
                continue;
            }
            let inner = dot(&projected, g.column(j));
            if inner < 0.0 {
                let scale = inner / sq_norms[j];
                axpy(-scale, g.column(j), &mut projected);
                coefficients[j] -= scale;
            }
        }
        axpy(1.0, &projected, &mut direction);
    }
    Combination::direction(direction, Diagnostics::with_coefficients(coefficients))
}
