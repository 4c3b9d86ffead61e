use super::{Combination, Diagnostics};
use crate::error::Result;
use crate::linalg::{gram, jacobi_eigh, EIGH_TOL};
use crate::types::{SquareMatrix, TaskGradients};

/// `G_hat = G * mixing`, where `mixing = sigma_min V Lambda^(-1/2) V^T` over
/// the eigenpairs of the gram matrix that survive the rank threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTransform {
    pub mixing: SquareMatrix,
    pub sigma_min: f64,
    pub rank: usize,
}

pub fn aligned_transform(g: &TaskGradients, rank_tol: f64) -> AlignedTransform {
    let t = g.tasks();
    let eig = jacobi_eigh(gram(g).matrix(), EIGH_TOL);
    let largest = eig.values[0];
    let mut mixing = SquareMatrix::zeros(t);
    if largest.is_nan() || largest <= 0.0 {
        return AlignedTransform {
            mixing,
            sigma_min: 0.0,
            rank: 0,
        };
    }
    let kept: Vec<usize> = (0..t)
        .filter(|&i| eig.values[i] > rank_tol * largest)
        .collect();
    let sigma_min = eig.values[*kept.last().expect("largest eigenvalue is kept")].sqrt();
    for &idx in &kept {
        let v = eig.vectors.column(idx);
        let scale = sigma_min / eig.values[idx].sqrt();
        for r in 0..t {
            for c in 0..t {
                mixing[(r, c)] += scale * v[r] * v[c];
            }
        }
    }
    AlignedTransform {
        mixing,
        sigma_min,
        rank: kept.len(),
    }
}

/// The aligned gradient matrix itself, whose nonzero singular values all
/// equal `sigma_min`.
pub fn aligned_gradients(g: &TaskGradients, rank_tol: f64) -> Result<TaskGradients> {
    let transform = aligned_transform(g, rank_tol);
    let columns: Vec<Vec<f64>> = (0..g.tasks())
        .map(|c| g.combine(&transform.mixing.column(c)))
        .collect();
    TaskGradients::from_columns(&columns, g.level())
}

/// Aligned-MTL: sum of the columns of the condition-number-one
/// approximation of `G`.
pub fn aligned_mtl(g: &TaskGradients, rank_tol: f64) -> Result<Combination> {
    let t = g.tasks();
    let transform = aligned_transform(g, rank_tol);
    let coefficients = transform.mixing.mul_vec(&vec![1.0; t]);
    let direction = g.combine(&coefficients);
    let diagnostics = Diagnostics {
        coefficients: Some(coefficients),
        converged: true,
        degenerate: transform.rank == 0,
        ..Default::default()
    };
    Combination::direction(direction, diagnostics)
}
