//! Small dense kernels on `T x T` systems (T is the task count, at most a
//! handful), plus the min-norm point in the convex hull of task gradients.

use crate::error::{Error, Result};
use crate::types::{
    dot, GradWeights, GramMatrix, SquareMatrix, TaskGradients, UpdateDirection, WeightConstraint,
};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 250;

/// Default off-diagonal tolerance for [`jacobi_eigh`] when called internally.
pub const EIGH_TOL: f64 = 1e-15;

const MAX_JACOBI_SWEEPS: usize = 100;

pub fn gram(g: &TaskGradients) -> GramMatrix {
    let t = g.tasks();
    let mut k = SquareMatrix::zeros(t);
    for i in 0..t {
        for j in i..t {
            let v = dot(g.column(i), g.column(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    GramMatrix::new(k).expect("finite columns give a finite symmetric gram matrix")
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn simplex_project(y: &[f64]) -> Result<GradWeights> {
    if y.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot project an empty vector".into(),
        ));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("simplex projection input"));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
        }
    }
    let mut x: Vec<f64> = y.iter().map(|v| (v - threshold).max(0.0)).collect();
    // Rounding in the cumulative sum can leave the total a few ulps off one.
    let total: f64 = x.iter().sum();
    if total > 0.0 {
        x.iter_mut().for_each(|v| *v /= total);
    }
    GradWeights::new(x, WeightConstraint::Simplex)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinNormPoint {
    pub weights: GradWeights,
    pub direction: UpdateDirection,
    pub converged: bool,
    /// Frank–Wolfe duality gap `|d|^2 - min_i <d, g_i>` at the returned point.
    pub gap: f64,
    pub iterations: usize,
}

/// Shortest vector in the convex hull of the task gradients.
///
/// Frank–Wolfe vertex steps with exact line search, each followed by
/// corrective minor cycles that re-solve the problem on the current active
/// set (Wolfe's min-norm-point scheme). Plain Frank–Wolfe only reaches the
/// tolerance sublinearly when the optimum sits inside a face.
pub fn min_norm_point(g: &TaskGradients, max_iters: usize, tol: f64) -> Result<MinNormPoint> {
    if max_iters == 0 {
        return Err(Error::InvalidArgument(
            "max_iters must be at least 1".into(),
        ));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let k = gram(g);
    let k = k.matrix();
    let t = k.size();
    let mut alpha = vec![1.0 / t as f64; t];
    let scale: f64 = (0..t).map(|i| k[(i, i)]).sum();

    let mut converged = false;
    let mut iterations = 0;
    if scale > 0.0 {
        for it in 0..max_iters {
            iterations = it + 1;
            let ka = k.mul_vec(&alpha);
            let q = dot(&alpha, &ka);
            let vertex = argmin(&ka);
            let gap = q - ka[vertex];
            if gap <= tol * (1.0 + q) {
                converged = true;
                iterations = it;
                break;
            }
            let denom = q - 2.0 * ka[vertex] + k[(vertex, vertex)];
            if denom <= 0.0 {
                break;
            }
            let step = ((q - ka[vertex]) / denom).clamp(0.0, 1.0);
            alpha.iter_mut().for_each(|a| *a *= 1.0 - step);
            alpha[vertex] += step;
            corrective_cycles(k, &mut alpha, scale);
        }
    } else {
        converged = true;
    }

    let ka = k.mul_vec(&alpha);
    let q = dot(&alpha, &ka);
    let gap = q - ka[argmin(&ka)];
    if !converged {
        converged = gap <= tol * (1.0 + q);
    }
    let direction = UpdateDirection::new(g.combine(&alpha))?;
    Ok(MinNormPoint {
        weights: GradWeights::new(alpha, WeightConstraint::Simplex)?,
        direction,
        converged,
        gap,
        iterations,
    })
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Minimize `a^T K a` over the affine hull of the active set, stepping back
/// to the simplex boundary (and dropping a vertex) when the affine minimizer
/// leaves it. Affinely dependent active sets are first reduced along a null
/// direction, which keeps `G a` unchanged.
fn corrective_cycles(k: &SquareMatrix, alpha: &mut [f64], scale: f64) {
    let t = alpha.len();
    for _ in 0..2 * t {
        let support: Vec<usize> = (0..t).filter(|&i| alpha[i] > 0.0).collect();
        let s = support.len();
        if s <= 1 {
            return;
        }
        let current: Vec<f64> = support.iter().map(|&i| alpha[i]).collect();

        let mut shifted = SquareMatrix::zeros(s);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                shifted[(a, b)] = k[(i, j)] + scale / s as f64;
            }
        }
        let eig = jacobi_eigh(&shifted, EIGH_TOL);
        let smallest = eig.values[s - 1];
        if smallest <= 1e-12 * scale * s as f64 {
            let mut null = eig.vectors.column(s - 1);
            if null.iter().all(|v| *v >= 0.0) {
                null.iter_mut().for_each(|v| *v = -*v);
            }
            let Some((blocking, theta)) = ratio_test(&current, &null) else {
                return;
            };
            let moved: Vec<f64> = current
                .iter()
                .zip(&null)
                .map(|(a, m)| (a + theta * m).max(0.0))
                .collect();
            write_support(alpha, &support, &moved, Some(blocking));
            continue;
        }

        let mut bordered = SquareMatrix::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                bordered[(a, b)] = k[(i, j)];
            }
            bordered[(a, s)] = 1.0;
            bordered[(s, a)] = 1.0;
        }
        let mut rhs = vec![0.0; s + 1];
        rhs[s] = 1.0;
        let Ok(solution) = solve_linear(&bordered, &rhs) else {
            return;
        };
        let target = &solution[..s];
        if target.iter().all(|v| *v >= 0.0) {
            write_support(alpha, &support, target, None);
            return;
        }
        let towards: Vec<f64> = target.iter().zip(&current).map(|(b, a)| b - a).collect();
        let Some((blocking, theta)) = ratio_test(&current, &towards) else {
            return;
        };
        let moved: Vec<f64> = current
            .iter()
            .zip(&towards)
            .map(|(a, d)| (a + theta * d).max(0.0))
            .collect();
        write_support(alpha, &support, &moved, Some(blocking));
    }
}

/// Largest step along `direction` keeping `current + step * direction >= 0`.
fn ratio_test(current: &[f64], direction: &[f64]) -> Option<(usize, f64)> {
    current
        .iter()
        .zip(direction)
        .enumerate()
        .filter(|(_, (_, d))| **d < 0.0)
        .map(|(i, (a, d))| (i, a / -d))
        .min_by(|x, y| x.1.total_cmp(&y.1))
}

fn write_support(alpha: &mut [f64], support: &[usize], values: &[f64], dropped: Option<usize>) {
    alpha.iter_mut().for_each(|a| *a = 0.0);
    for (pos, (&i, &v)) in support.iter().zip(values).enumerate() {
        alpha[i] = if Some(pos) == dropped { 0.0 } else { v };
    }
    let total: f64 = alpha.iter().sum();
    alpha.iter_mut().for_each(|a| *a /= total);
}

/// Eigen-decomposition of a symmetric matrix. Eigenvalues are sorted in
/// descending order; `vectors` holds the matching eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: SquareMatrix,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls to
/// `tol * |K|_F` (or no rotation is numerically meaningful any more).
pub fn jacobi_eigh(matrix: &SquareMatrix, tol: f64) -> SymmetricEigen {
    let n = matrix.size();
    let mut a = matrix.clone();
    let mut v = SquareMatrix::identity(n);
    let target = tol * matrix.frobenius_norm();
    let mut sweeps = 0;

    while sweeps < MAX_JACOBI_SWEEPS && off_diagonal_norm(&a) > target {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                if apq.abs() <= f64::EPSILON * 1e-3 * (app.abs() * aqq.abs()).sqrt() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let tan = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let tan = if theta == 0.0 { 1.0 } else { tan };
                let cos = 1.0 / (tan * tan + 1.0).sqrt();
                let sin = tan * cos;
                for r in 0..n {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = cos * arp - sin * arq;
                    a[(r, q)] = sin * arp + cos * arq;
                }
                for c in 0..n {
                    let apc = a[(p, c)];
                    let aqc = a[(q, c)];
                    a[(p, c)] = cos * apc - sin * aqc;
                    a[(q, c)] = sin * apc + cos * aqc;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = cos * vrp - sin * vrq;
                    v[(r, q)] = sin * vrp + cos * vrq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, new)] = v[(r, old)];
        }
    }
    SymmetricEigen {
        values,
        vectors,
        sweeps,
    }
}

fn off_diagonal_norm(a: &SquareMatrix) -> f64 {
    let n = a.size();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear(a: &SquareMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.size();
    if b.len() != n {
        return Err(Error::Shape(format!(
            "right-hand side has length {} for a {n}x{n} system",
            b.len()
        )));
    }
    if a.as_row_major().iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear system"));
    }
    let threshold = 1e-12 * a.inf_norm();
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
            .expect("non-empty range");
        let pivot = m[(pivot_row, col)];
        if pivot.abs() < threshold || pivot == 0.0 {
            return Err(Error::SingularSystem { pivot: pivot.abs() });
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = m[(col, c)];
                m[(col, c)] = m[(pivot_row, c)];
                m[(pivot_row, c)] = tmp;
            }
            x.swap(col, pivot_row);
        }
        for r in (col + 1)..n {
            let factor = m[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                m[(r, c)] -= factor * m[(col, c)];
            }
            x[r] -= factor * x[col];
        }
    }
    for row in (0..n).rev() {
        let tail: f64 = ((row + 1)..n).map(|c| m[(row, c)] * x[c]).sum();
        x[row] = (x[row] - tail) / m[(row, row)];
    }
    Ok(x)
}

/// Minimum-norm least-squares solution of `A x = b` through the
/// eigen-decomposition of `A^T A`, truncating eigenvalues below
/// `rel_tol * max eigenvalue`.
pub fn solve_least_squares(a: &SquareMatrix, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let n = a.size();
    let at = a.transpose();
    let normal = at.matmul(a);
    let atb = at.mul_vec(b);
    let eig = jacobi_eigh(&normal, EIGH_TOL);
    let cutoff = rel_tol * eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let mut x = vec![0.0; n];
    for (idx, &lambda) in eig.values.iter().enumerate() {
        if lambda <= cutoff || lambda <= 0.0 {
            continue;
        }
        let v = eig.vectors.column(idx);
        let coef = dot(&v, &atb) / lambda;
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += coef * vi;
        }
    }
    x
}
