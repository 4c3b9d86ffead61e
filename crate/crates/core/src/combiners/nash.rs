use super::{Combination, Diagnostics};
use crate::error::{Error, Result};
use crate::linalg::{gram, solve_linear};
use crate::types::{dot, SquareMatrix, TaskGradients};

const FLOOR: f64 = 1e-8;
const NEWTON_ITERS: usize = 50;

/// Absolute residual `|K alpha - 1/alpha|_inf` and the scale-free
/// `|alpha * K alpha - 1|_inf`. The second one rules out the runaway
/// `alpha -> inf` "solutions" of systems without a positive root, where the
/// absolute residual shrinks like `1/alpha`.
fn residuals(k: &SquareMatrix, alpha: &[f64]) -> (f64, f64) {
    k.mul_vec(alpha)
        .iter()
        .zip(alpha)
        .fold((0.0, 0.0), |(abs, rel), (ka, a)| {
            (
                f64::max(abs, (ka - 1.0 / a).abs()),
                f64::max(rel, (a * ka - 1.0).abs()),
            )
        })
}

/// `K alpha = 1/alpha` is the stationarity condition of the convex
/// `f(alpha) = alpha^T K alpha / 2 - sum_i ln alpha_i`; Newton steps with
/// backtracking that keeps `alpha` positive and decreases `f`.
fn newton(k: &SquareMatrix, start: &[f64], tol: f64) -> Option<(Vec<f64>, usize)> {
    let t = start.len();
    let objective = |a: &[f64]| 0.5 * dot(a, &k.mul_vec(a)) - a.iter().map(|v| v.ln()).sum::<f64>();
    let mut alpha = start.to_vec();
    for it in 0..NEWTON_ITERS {
        let (abs, rel) = residuals(k, &alpha);
        if abs <= tol && rel <= tol {
            return Some((alpha, it));
        }
        let grad: Vec<f64> = k
            .mul_vec(&alpha)
            .iter()
            .zip(&alpha)
            .map(|(ka, a)| ka - 1.0 / a)
            .collect();
        let mut hessian = k.clone();
        for i in 0..t {
            hessian[(i, i)] += 1.0 / (alpha[i] * alpha[i]);
        }
        let step = solve_linear(&hessian, &grad).ok()?;
        let f0 = objective(&alpha);
        let slope = -dot(&grad, &step);
        let mut s = 1.0;
        loop {
            let trial: Vec<f64> = alpha.iter().zip(&step).map(|(a, d)| a - s * d).collect();
            if trial.iter().all(|v| *v > 0.0) && objective(&trial) <= f0 + 1e-4 * s * slope {
                alpha = trial;
                break;
            }
            s *= 0.5;
            if s < 1e-12 {
                return None;
            }
        }
    }
    None
}

/// Nash bargaining weights: the positive solution of `K alpha = 1 / alpha`
/// (element-wise), found by the damped fixed point
/// `alpha <- (1 - damping) alpha + damping / (K alpha)`.
///
/// Starts from `1 / |g_i|`. When the fixed point stalls or oscillates, a
/// safeguarded Newton solve from the same start takes over; if that fails
/// too (no positive root, e.g. opposing gradients) the uniform weighting is
/// returned with `converged = false`.
pub fn nash_mtl(
    g: &TaskGradients,
    damping: f64,
    max_iters: usize,
    tol: f64,
) -> Result<Combination> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must lie in (0, 1], got {damping}"
        )));
    }
    let t = g.tasks();
    let k = gram(g);
    let k = k.matrix();
    let start: Vec<f64> = (0..t)
        .map(|i| {
            let n = k[(i, i)].sqrt();
            if n > FLOOR {
                1.0 / n
            } else {
                1.0
            }
        })
        .collect();
    let mut alpha = start.clone();

    let mut converged = false;
    let mut iterations = 0;
    let mut last_residual = f64::INFINITY;
    for it in 0..=max_iters {
        let (abs, rel) = residuals(k, &alpha);
        last_residual = abs;
        if abs <= tol && rel <= tol {
            converged = true;
            iterations = it;
            break;
        }
        if it == max_iters || !last_residual.is_finite() {
            iterations = it;
            break;
        }
        let ka = k.mul_vec(&alpha);
        for (a, kai) in alpha.iter_mut().zip(ka) {
            *a = ((1.0 - damping) * *a + damping / kai.max(FLOOR)).max(FLOOR);
        }
    }

    if !converged {
        match newton(k, &start, tol) {
            Some((solution, steps)) => {
                alpha = solution;
                converged = true;
                iterations += steps;
                last_residual = residuals(k, &alpha).0;
            }
            None => alpha = vec![1.0 / t as f64; t],
        }
    }
    let direction = g.combine(&alpha);
    let diagnostics = Diagnostics {
        coefficients: Some(alpha),
        converged,
        iterations,
        residual: Some(last_residual),
        ..Default::default()
    };
    Combination::direction(direction, diagnostics)
}
