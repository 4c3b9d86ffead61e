use super::ZERO_NORM;
use crate::error::{Error, Result};
use crate::types::{dot, TaskGradients};

/// `lambda * sum_{i<j} cos^2(g_i, g_j)`; pairs with a zero gradient add 0.
pub fn cosreg_penalty(g: &TaskGradients, lambda: f64) -> f64 {
    let norms = g.norms();
    let mut total = 0.0;
    for i in 0..g.tasks() {
        for j in i + 1..g.tasks() {
            if norms[i] < ZERO_NORM || norms[j] < ZERO_NORM {
                continue;
            }
            let cos = dot(g.column(i), g.column(j)) / (norms[i] * norms[j]);
            total += cos * cos;
        }
    }
    lambda * total
}

/// Gradient of [`cosreg_penalty`] with respect to each column, column-major
/// like `g`. Chained through a Jacobian (or Hessian-vector products) this
/// gives the regularizer gradient analytically.
pub fn cosreg_penalty_gradient(g: &TaskGradients, lambda: f64) -> Vec<f64> {
    let (d, t) = (g.dim(), g.tasks());
    let norms = g.norms();
    let mut out = vec![0.0; d * t];
    for i in 0..t {
        for j in 0..t {
            if i == j || norms[i] < ZERO_NORM || norms[j] < ZERO_NORM {
                continue;
            }
            let (gi, gj) = (g.column(i), g.column(j));
            let cos = dot(gi, gj) / (norms[i] * norms[j]);
            let a = 2.0 * lambda * cos / (norms[i] * norms[j]);
            let b = 2.0 * lambda * cos * cos / (norms[i] * norms[i]);
            for k in 0..d {
                out[i * d + k] += a * gj[k] - b * gi[k];
            }
        }
    }
    out
}

/// Gradient of the cosine regularizer with respect to `theta`, by central
/// differences of `penalty(grads(theta))` one coordinate at a time.
pub fn cosreg_gradient<F>(theta: &[f64], lambda: f64, fd_step: f64, grads: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<TaskGradients>,
{
    if fd_step.is_nan() || fd_step <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "fd_step must be positive, got {fd_step}"
        )));
    }
    let mut probe = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        probe[k] = theta[k] + fd_step;
        let up = cosreg_penalty(&grads(&probe)?, lambda);
        probe[k] = theta[k] - fd_step;
        let down = cosreg_penalty(&grads(&probe)?, lambda);
        probe[k] = theta[k];
        out.push((up - down) / (2.0 * fd_step));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GradientLevel;

    fn grads(columns: &[&[f64]]) -> TaskGradients {
        TaskGradients::from_columns(columns, GradientLevel::Parameter).unwrap()
    }

    #[test]
    fn penalty_values() {
        assert_eq!(
            cosreg_penalty(&grads(&[&[1.0, 0.0], &[0.0, 3.0]]), 0.1),
            0.0
        );
        let p = cosreg_penalty(&grads(&[&[1.0, 2.0], &[2.0, 4.0]]), 0.1);
        assert!((p - 0.1).abs() < 1e-15);
        assert_eq!(
            cosreg_penalty(&grads(&[&[0.0, 0.0], &[2.0, 4.0]]), 0.1),
            0.0
        );
    }

    #[test]
    fn penalty_gradient_matches_differences() {
        let g = grads(&[&[1.0, 0.5, -0.2], &[0.3, -1.0, 0.8], &[0.7, 0.7, 0.1]]);
        let analytic = cosreg_penalty_gradient(&g, 0.1);
        let h = 1e-6;
        for idx in 0..9 {
            let mut raw = g.as_column_major().to_vec();
            raw[idx] += h;
            let up = cosreg_penalty(
                &TaskGradients::from_column_major(raw.clone(), 3, 3, GradientLevel::Parameter)
                    .unwrap(),
                0.1,
            );
            raw[idx] -= 2.0 * h;
            let down = cosreg_penalty(
                &TaskGradients::from_column_major(raw, 3, 3, GradientLevel::Parameter).unwrap(),
                0.1,
            );
            assert!((analytic[idx] - (up - down) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn orthogonal_field_has_zero_gradient() {
        // g_1 = (theta_0, 0), g_2 = (0, theta_1): orthogonal everywhere.
        let f = |th: &[f64]| {
            TaskGradients::from_columns(
                &[vec![th[0], 0.0], vec![0.0, th[1]]],
                GradientLevel::Parameter,
            )
        };
        let grad = cosreg_gradient(&[1.0, 2.0], 0.1, 1e-5, f).unwrap();
        assert!(grad.iter().all(|v| v.abs() < 1e-12));
    }
}
