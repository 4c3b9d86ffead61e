//! Domain values shared by every combiner and monitor.
//!
//! All of these are validated at construction and immutable afterwards, so a
//! value that exists is a value that satisfies its invariants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where per-task gradients were taken: with respect to the shared
/// parameters, or with respect to the shared representation they produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientLevel {
    #[serde(rename = "param")]
    Parameter,
    Feature,
}

impl GradientLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            GradientLevel::Parameter => "param",
            GradientLevel::Feature => "feature",
        }
    }
}

impl std::str::FromStr for GradientLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "param" | "parameter" => Ok(GradientLevel::Parameter),
            "feature" | "rep" => Ok(GradientLevel::Feature),
            other => Err(Error::InvalidArgument(format!(
                "unknown gradient level {other:?} (expected param or feature)"
            ))),
        }
    }
}

impl std::fmt::Display for GradientLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// A `d x T` matrix whose column `i` is the gradient of task `i`.
///
/// Stored column-major so each task gradient is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGradients {
    data: Vec<f64>,
    dim: usize,
    tasks: usize,
    level: GradientLevel,
}

impl TaskGradients {
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C], level: GradientLevel) -> Result<Self> {
        let tasks = columns.len();
        let dim = columns.first().map_or(0, |c| c.as_ref().len());
        let mut data = Vec::with_capacity(dim * tasks);
        for (i, column) in columns.iter().enumerate() {
            let column = column.as_ref();
            if column.len() != dim {
                return Err(Error::Shape(format!(
                    "column {i} has length {} but column 0 has length {dim}",
                    column.len()
                )));
            }
            data.extend_from_slice(column);
        }
        Self::from_column_major(data, dim, tasks, level)
    }

    pub fn from_column_major(
        data: Vec<f64>,
        dim: usize,
        tasks: usize,
        level: GradientLevel,
    ) -> Result<Self> {
        if tasks < 2 {
            return Err(Error::TooFewTasks(tasks));
        }
        if dim == 0 {
            return Err(Error::Shape("gradient dimension must be at least 1".into()));
        }
        if data.len() != dim * tasks {
            return Err(Error::Shape(format!(
                "expected {} entries for a {dim}x{tasks} matrix, got {}",
                dim * tasks,
                data.len()
            )));
        }
        check_finite(&data, "task gradients")?;
        Ok(TaskGradients {
            data,
            dim,
            tasks,
            level,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn level(&self) -> GradientLevel {
        self.level
    }

    pub fn column(&self, task: usize) -> &[f64] {
        &self.data[task * self.dim..(task + 1) * self.dim]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Row `j`: the `j`-th coordinate of every task gradient.
    pub fn row(&self, j: usize) -> Vec<f64> {
        (0..self.tasks)
            .map(|i| self.data[i * self.dim + j])
            .collect()
    }

    pub fn as_column_major(&self) -> &[f64] {
        &self.data
    }

    /// `G * coefficients`, i.e. `sum_i coefficients[i] * g_i`.
    pub fn combine(&self, coefficients: &[f64]) -> Vec<f64> {
        assert_eq!(coefficients.len(), self.tasks, "one coefficient per task");
        let mut out = vec![0.0; self.dim];
        for (column, &c) in self.columns().zip(coefficients) {
            axpy(c, column, &mut out);
        }
        out
    }

    pub fn sum(&self) -> Vec<f64> {
        self.combine(&vec![1.0; self.tasks])
    }

    pub fn norms(&self) -> Vec<f64> {
        self.columns().map(norm).collect()
    }

    /// Same values with the task columns reordered: column `k` of the result
    /// is column `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let columns: Vec<&[f64]> = order.iter().map(|&i| self.column(i)).collect();
        Self::from_columns(&columns, self.level)
    }
}

/// Per-task loss values `L_1..L_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "loss vector")?;
        Ok(LossVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightConstraint {
    Unconstrained,
    /// Nonnegative, summing to one.
    Simplex,
    /// Summing to the task count.
    SumT,
    Positive,
}

/// Task coefficients (`alpha` for gradient combinations, `w` for loss weights).
#[derive(Debug, Clone, PartialEq)]
pub struct GradWeights {
    values: Vec<f64>,
    constraint: WeightConstraint,
}

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

impl GradWeights {
    pub fn new(values: Vec<f64>, constraint: WeightConstraint) -> Result<Self> {
        check_finite(&values, "weights")?;
        let sum: f64 = values.iter().sum();
        let violated = |name, detail: String| {
            Err(Error::ConstraintViolated {
                constraint: name,
                detail,
            })
        };
        match constraint {
            WeightConstraint::Unconstrained => {}
            WeightConstraint::Simplex => {
                if let Some(v) = values.iter().find(|v| **v < 0.0) {
                    return violated("simplex", format!("negative entry {v}"));
                }
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return violated("simplex", format!("sum is {sum}"));
                }
            }
            WeightConstraint::SumT => {
                let target = values.len() as f64;
                if (sum - target).abs() > WEIGHT_SUM_TOL {
                    return violated("sum-to-T", format!("sum is {sum}, expected {target}"));
                }
            }
            WeightConstraint::Positive => {
                if let Some(v) = values.iter().find(|v| **v <= 0.0) {
                    return violated("positive", format!("entry {v}"));
                }
            }
        }
        Ok(GradWeights { values, constraint })
    }

    pub fn uniform(tasks: usize) -> Self {
        GradWeights {
            values: vec![1.0 / tasks as f64; tasks],
            constraint: WeightConstraint::Simplex,
        }
    }

    pub fn ones(tasks: usize) -> Self {
        GradWeights {
            values: vec![1.0; tasks],
            constraint: WeightConstraint::SumT,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn constraint(&self) -> WeightConstraint {
        self.constraint
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The combined shared-parameter update `g_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDirection(Vec<f64>);

impl UpdateDirection {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "update direction")?;
        Ok(UpdateDirection(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Small dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "row of length {} in a {n}x{n} matrix",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!(
                "expected {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for SquareMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// `K = G^T G`, the pairwise inner products of task gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(SquareMatrix);

pub const GRAM_SYMMETRY_TOL: f64 = 1e-9;

impl GramMatrix {
    pub fn new(matrix: SquareMatrix) -> Result<Self> {
        check_finite(matrix.as_row_major(), "gram matrix")?;
        let scale = 1.0 + matrix.frobenius_norm();
        if matrix.max_asymmetry() > GRAM_SYMMETRY_TOL * scale {
            return Err(Error::InvalidArgument(
                "gram matrix is not symmetric".into(),
            ));
        }
        Ok(GramMatrix(matrix))
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.size()
    }
}

impl std::ops::Index<(usize, usize)> for GramMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
