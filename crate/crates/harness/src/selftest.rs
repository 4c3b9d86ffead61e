//! Worked examples for every combiner and monitor, runnable from the CLI.

use mtlab_core::combiners::{
    aligned_mtl, cagrad, dwa, famo_weights, gradvac, imtl, mgda, nash_mtl, pcgrad, uncertainty,
};
use mtlab_core::monitors::{fd_entropy, gds, gms, moving_average, ranking_similarity, Ranking};
use mtlab_core::{GradientLevel, LossVector, Result, SquareMatrix, TaskGradients};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn param(columns: &[&[f64]]) -> Result<TaskGradients> {
    TaskGradients::from_columns(columns, GradientLevel::Parameter)
}

fn losses(v: &[f64]) -> Result<LossVector> {
    LossVector::new(v.to_vec())
}

type Example = (&'static str, fn() -> Result<bool>);

const EXAMPLES: &[Example] = &[
    ("pcgrad conflicting pair", || {
        let g = param(&[&[1.0, 0.0], &[-1.0, 1.0]])?;
        let d = pcgrad(&g, &mut ChaCha8Rng::seed_from_u64(0))?
            .direction
            .unwrap();
        Ok(close(d.values(), &[0.5, 1.5], 1e-12))
    }),
    ("gradvac zero targets", || {
        let g = param(&[&[1.0, 0.0], &[-1.0, 1.0]])?;
        let (c, _) = gradvac(&g, &SquareMatrix::zeros(2), 0.01)?;
        Ok(close(c.direction.unwrap().values(), &[0.5, 1.5], 1e-12))
    }),
    ("mgda orthonormal", || {
        let d = mgda(&param(&[&[1.0, 0.0], &[0.0, 1.0]])?, 250, 1e-8)?
            .direction
            .unwrap();
        Ok(close(d.values(), &[0.5, 0.5], 1e-9))
    }),
    ("cagrad orthonormal", || {
        let d = cagrad(&param(&[&[1.0, 0.0], &[0.0, 1.0]])?, 0.5, 100, 0.05)?
            .direction
            .unwrap();
        Ok(close(d.values(), &[0.75, 0.75], 1e-12))
    }),
    ("nash-mtl norms two and one", || {
        let c = nash_mtl(&param(&[&[2.0, 0.0], &[0.0, 1.0]])?, 0.5, 200, 1e-6)?;
        Ok(c.diagnostics.converged
            && close(&c.diagnostics.coefficients.unwrap(), &[0.5, 1.0], 1e-6))
    }),
    ("aligned-mtl rescaling", || {
        let d = aligned_mtl(&param(&[&[2.0, 0.0], &[0.0, 1.0]])?, 1e-9)?
            .direction
            .unwrap();
        Ok(close(d.values(), &[1.0, 1.0], 1e-12))
    }),
    ("imtl unequal pair", || {
        let d = imtl(&param(&[&[2.0, 0.0], &[0.0, 1.0]])?)?
            .direction
            .unwrap();
        Ok(close(d.values(), &[2.0 / 3.0, 2.0 / 3.0], 1e-12))
    }),
    ("dwa rate two against one", || {
        let w = dwa(&[losses(&[1.0, 1.0])?, losses(&[2.0, 1.0])?], 2, 2.0)?;
        Ok(close(w.values(), &[1.2449, 0.7551], 1e-4))
    }),
    ("uncertainty stationary point", || {
        let (_, s) = uncertainty(&losses(&[1.0, 1.0])?, &[0.0, 0.0], 0.05)?;
        Ok(s == [0.0, 0.0])
    }),
    ("famo equal losses", || {
        Ok(close(
            famo_weights(&losses(&[1.0, 1.0])?, &[0.0, 0.0], 1e-8)?.values(),
            &[0.5, 0.5],
            1e-15,
        ))
    }),
    ("gds diagonal pair", || {
        Ok(
            (gds(&param(&[&[1.0, 0.0], &[1.0, 1.0]])?) - std::f64::consts::FRAC_1_SQRT_2).abs()
                < 1e-12,
        )
    }),
    ("gms norms one and three", || {
        Ok((gms(&param(&[&[1.0, 0.0], &[0.0, 3.0]])?) - 0.6).abs() < 1e-12)
    }),
    ("fd single location", || {
        let g = TaskGradients::from_columns(&[[0.75], [0.25]], GradientLevel::Feature)?;
        Ok((fd_entropy(&g)?.value - 0.56233).abs() < 1e-5)
    }),
    ("moving average window two", || {
        Ok(moving_average(&[1.0, 2.0, 3.0, 4.0], 2) == [1.0, 1.5, 2.5, 3.5])
    }),
    ("ranking one swap", || {
        let labels = || vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let a = Ranking::new(labels(), vec![3.0, 2.0, 1.0])?;
        let b = Ranking::new(labels(), vec![2.0, 3.0, 1.0])?;
        Ok((ranking_similarity(&a, &b)?.raw - 2.0 / 3.0).abs() < 1e-12)
    }),
];

pub fn run_selftest() -> Vec<Check> {
    EXAMPLES
        .iter()
        .map(|(name, check)| Check {
            name,
            passed: matches!(check(), Ok(true)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_examples_pass() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}", c.name);
        }
    }
}
