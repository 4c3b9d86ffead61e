use super::{Combination, Diagnostics};
use crate::error::Result;
use crate::linalg::min_norm_point;
use crate::types::TaskGradients;

/// Multiple-gradient descent: the min-norm point of the convex hull.
pub fn mgda(g: &TaskGradients, max_iters: usize, tol: f64) -> Result<Combination> {
    let point = min_norm_point(g, max_iters, tol)?;
    let diagnostics = Diagnostics {
        coefficients: Some(point.weights.values().to_vec()),
        converged: point.converged,
        iterations: point.iterations,
        residual: Some(point.gap),
        ..Default::default()
    };
    Ok(Combination {
        direction: Some(point.direction),
        loss_weights: None,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GradientLevel;

    #[test]
    fn examples() {
        let run = |columns: &[&[f64]]| {
            let g = TaskGradients::from_columns(columns, GradientLevel::Parameter).unwrap();
            mgda(&g, 250, 1e-8).unwrap().direction.unwrap().into_inner()
        };
        let d = run(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((d[0] - 0.5).abs() < 1e-9 && (d[1] - 0.5).abs() < 1e-9);
        assert_eq!(run(&[&[2.0, -1.0], &[2.0, -1.0]]), vec![2.0, -1.0]);
        let d = run(&[&[1.0, 0.0], &[3.0, 0.0]]);
        assert!((d[0] - 1.0).abs() < 1e-12 && d[1] == 0.0);
    }
}
