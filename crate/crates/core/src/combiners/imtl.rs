use super::{Combination, Diagnostics, ZERO_NORM};
use crate::error::{Error, Result};
use crate::linalg::{solve_least_squares, solve_linear};
use crate::types::{dot, SquareMatrix, TaskGradients};

/// Impartial MTL, gradient side: find `alpha` with `sum(alpha) = 1` such that
/// `G alpha` has the same projection onto every unit task direction.
///
/// With `u_i = g_i / |g_i|`, `U = [u_1 - u_i]` and `D = [g_1 - g_i]`
/// (i = 2..T), the tail of `alpha` solves `(U^T D) a = U^T g_1`. A singular
/// system whose right-hand side is still in range (e.g. more tasks than
/// dimensions, where the common projection is zero) is solved in the
/// least-squares sense; anything else falls back to uniform weights.
pub fn imtl(g: &TaskGradients) -> Result<Combination> {
    let t = g.tasks();
    let norms = g.norms();
    if let Some(i) = norms.iter().position(|n| *n <= ZERO_NORM) {
        return Err(Error::InvalidArgument(format!(
            "task {i} has a zero gradient"
        )));
    }
    let units: Vec<Vec<f64>> = g
        .columns()
        .zip(&norms)
        .map(|(c, n)| c.iter().map(|v| v / n).collect())
        .collect();

    let uniform = || {
        let alpha = vec![1.0 / t as f64; t];
        let direction = g.combine(&alpha);
        let diagnostics = Diagnostics {
            coefficients: Some(alpha),
            converged: false,
            degenerate: true,
            ..Default::default()
        };
        Combination::direction(direction, diagnostics)
    };

    let all_aligned = units[1..].iter().all(|u| {
        u.iter()
            .zip(&units[0])
            .all(|(a, b)| (a - b).abs() <= ZERO_NORM)
    });
    if all_aligned {
        return uniform();
    }

    let m = t - 1;
    let diff = |vectors: &dyn Fn(usize) -> Vec<f64>, i: usize| -> Vec<f64> {
        let first = vectors(0);
        first.iter().zip(vectors(i)).map(|(a, b)| a - b).collect()
    };
    let unit_of = |i: usize| units[i].clone();
    let grad_of = |i: usize| g.column(i).to_vec();
    let u_diffs: Vec<Vec<f64>> = (1..t).map(|i| diff(&unit_of, i)).collect();
    let g_diffs: Vec<Vec<f64>> = (1..t).map(|i| diff(&grad_of, i)).collect();

    let mut a = SquareMatrix::zeros(m);
    for r in 0..m {
        for c in 0..m {
            a[(r, c)] = dot(&u_diffs[r], &g_diffs[c]);
        }
    }
    let rhs: Vec<f64> = u_diffs.iter().map(|u| dot(u, g.column(0))).collect();

    let (tail, singular) = match solve_linear(&a, &rhs) {
        Ok(x) => (x, false),
        Err(Error::SingularSystem { .. }) => {
            let x = solve_least_squares(&a, &rhs, 1e-12);
            let fit = a.mul_vec(&x);
            let miss = fit
                .iter()
                .zip(&rhs)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            let scale = 1.0 + rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if miss > 1e-9 * scale {
                return uniform();
            }
            (x, true)
        }
        Err(e) => return Err(e),
    };

    let mut alpha = Vec::with_capacity(t);
    alpha.push(1.0 - tail.iter().sum::<f64>());
    alpha.extend(tail);
    let direction = g.combine(&alpha);
    let diagnostics = Diagnostics {
        coefficients: Some(alpha),
        converged: true,
        degenerate: singular,
        ..Default::default()
    };
    Combination::direction(direction, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GradientLevel;

    fn run(columns: &[&[f64]]) -> Combination {
        let g = TaskGradients::from_columns(columns, GradientLevel::Parameter).unwrap();
        imtl(&g).unwrap()
    }

    #[test]
    fn unequal_orthogonal_pair() {
        let c = run(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let alpha = c.diagnostics.coefficients.unwrap();
        assert!((alpha[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((alpha[1] - 2.0 / 3.0).abs() < 1e-12);
        let d = c.direction.unwrap();
        assert!((d.values()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d.values()[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_is_uniform() {
        let alpha = run(&[&[1.0, 0.0], &[0.0, 1.0]])
            .diagnostics
            .coefficients
            .unwrap();
        assert!((alpha[0] - 0.5).abs() < 1e-12 && (alpha[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_columns_fall_back() {
        let c = run(&[&[1.0, 2.0], &[1.0, 2.0]]);
        assert!(c.diagnostics.degenerate);
        assert_eq!(c.diagnostics.coefficients.unwrap(), vec![0.5, 0.5]);
        assert_eq!(c.direction.unwrap().values(), &[1.0, 2.0]);
    }

    #[test]
    fn more_tasks_than_dimensions() {
        let c = run(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, -1.0]]);
        let d = c.direction.unwrap();
        // Three directions spanning the plane: only the zero vector projects equally.
        assert!(d.values().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn zero_gradient_is_rejected() {
        let g = TaskGradients::from_columns(
            &[vec![0.0, 0.0], vec![1.0, 0.0]],
            GradientLevel::Parameter,
        )
        .unwrap();
        assert!(imtl(&g).is_err());
    }
}
