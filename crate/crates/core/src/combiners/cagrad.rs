use super::{Combination, Diagnostics, ZERO_NORM};
use crate::error::{Error, Result};
use crate::linalg::{gram, simplex_project};
use crate::types::{axpy, dot, norm, TaskGradients};

/// Conflict-averse gradient descent.
///
/// With `g0` the average gradient and `sqrt_phi = c |g0|`, the dual
/// `min_w <G w, g0> + sqrt_phi |G w|` over the simplex is solved by projected
/// gradient descent from the uniform point (everything through the gram
/// matrix), and the update is `g0 + sqrt_phi / |G w| * G w`.
pub fn cagrad(g: &TaskGradients, c: f64, iters: usize, step: f64) -> Result<Combination> {
    if !c.is_finite() || c < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "c must be nonnegative, got {c}"
        )));
    }
    let t = g.tasks();
    let uniform = 1.0 / t as f64;
    let g0 = g.combine(&vec![uniform; t]);
    if c == 0.0 {
        return Combination::direction(g0, Diagnostics::with_coefficients(vec![uniform; t]));
    }
    let sqrt_phi = c * norm(&g0);
    // The minimizer is unchanged when G is rescaled, so the descent runs on
    // the gram matrix normalized to unit mean diagonal and the fixed step
    // means the same thing at every gradient scale.
    let raw = gram(g);
    let raw = raw.matrix();
    let mean_diag = (0..t).map(|i| raw[(i, i)]).sum::<f64>() / t as f64;
    let mut k = raw.clone();
    if mean_diag > 0.0 {
        for r in 0..t {
            for c in 0..t {
                k[(r, c)] /= mean_diag;
            }
        }
    }
    let sqrt_phi_unit = if mean_diag > 0.0 {
        sqrt_phi / mean_diag.sqrt()
    } else {
        0.0
    };
    let k_mean = k.mul_vec(&vec![uniform; t]);

    let mut w = vec![uniform; t];
    for _ in 0..iters {
        let kw = k.mul_vec(&w);
        let gw_norm = dot(&w, &kw).max(0.0).sqrt();
        let mut grad = k_mean.clone();
        if gw_norm > ZERO_NORM {
            axpy(sqrt_phi_unit / gw_norm, &kw, &mut grad);
        }
        let trial: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect();
        w = simplex_project(&trial)?.values().to_vec();
    }

    let gw = g.combine(&w);
    let gw_norm = norm(&gw);
    if gw_norm < ZERO_NORM {
        let diagnostics = Diagnostics {
            coefficients: Some(vec![uniform; t]),
            degenerate: true,
            converged: true,
            iterations: iters,
            ..Default::default()
        };
        return Combination::direction(g0, diagnostics);
    }
    let scale = sqrt_phi / gw_norm;
    let mut direction = g0;
    axpy(scale, &gw, &mut direction);
    let coefficients = w.iter().map(|wi| uniform + scale * wi).collect();
    let diagnostics = Diagnostics {
        coefficients: Some(coefficients),
        converged: true,
        iterations: iters,
        ..Default::default()
    };
    Combination::direction(direction, diagnostics)
}
