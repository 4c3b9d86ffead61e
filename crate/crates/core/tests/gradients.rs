//! Analytic toy-problem gradients against finite differences.

use mtlab_core::combiners::{cosreg_gradient, cosreg_penalty_gradient};
use mtlab_core::toylab::{Activation, Params, ProblemSpec, ToyProblem};
use mtlab_core::{GradientLevel, TaskGradients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random_problem(rng: &mut ChaCha8Rng, activation: Activation) -> (ToyProblem, Params) {
    let spec = ProblemSpec {
        seed: rng.random(),
        input_dim: rng.random_range(2..=6),
        feature_dim: rng.random_range(4..=10),
        tasks: rng.random_range(2..=4),
        samples: rng.random_range(4..=24),
        overlap: rng.random_range(0.0..=1.0),
        noise: 0.1,
        activation,
    };
    let problem = ToyProblem::new(spec).unwrap();
    let params = problem.init_params(rng);
    (problem, params)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let size = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if size == 0.0 {
        diff
    } else {
        diff / size
    }
}

#[test]
fn parameter_level_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..50 {
        let act = if case % 2 == 0 {
            Activation::Tanh
        } else {
            Activation::Identity
        };
        let (problem, params) = random_problem(&mut rng, act);
        let analytic = problem
            .evaluate(&params)
            .unwrap()
            .param_gradients()
            .unwrap();
        for task in 0..problem.tasks() {
            let fd: Vec<f64> = (0..params.w.len())
                .map(|k| {
                    let mut p = params.clone();
                    p.w[k] += H;
                    let up = problem.losses(&p).unwrap().values()[task];
                    p.w[k] -= 2.0 * H;
                    let down = problem.losses(&p).unwrap().values()[task];
                    (up - down) / (2.0 * H)
                })
                .collect();
            let e = rel_err(analytic.column(task), &fd);
            assert!(e < 1e-5, "case {case} task {task}: {e}");
        }
    }
}

#[test]
fn feature_level_matches_differences_in_z() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let (problem, params) = random_problem(&mut rng, Activation::Tanh);
        let eval = problem.evaluate(&params).unwrap();
        let batch = eval.feature_gradients().unwrap();
        let per_sample = eval.saliencies().unwrap();
        let z = problem.features(&params.w);
        let m = problem.feature_dim();
        let loss = |z: &[f64], task: usize| {
            problem
                .losses_from_features(&params.heads, z)
                .unwrap()
                .values()[task]
        };
        for task in 0..problem.tasks() {
            // A perturbation shared by every sample's representation.
            let fd: Vec<f64> = (0..m)
                .map(|j| {
                    let mut up = z.clone();
                    let mut down = z.clone();
                    for k in 0..problem.samples() {
                        up[k * m + j] += H;
                        down[k * m + j] -= H;
                    }
                    (loss(&up, task) - loss(&down, task)) / (2.0 * H)
                })
                .collect();
            assert!(rel_err(batch.column(task), &fd) < 1e-5, "case {case}");
            let fd: Vec<f64> = (0..z.len())
                .map(|idx| {
                    let mut up = z.clone();
                    let mut down = z.clone();
                    up[idx] += H;
                    down[idx] -= H;
                    (loss(&up, task) - loss(&down, task)) / (2.0 * H)
                })
                .collect();
            assert!(rel_err(per_sample.column(task), &fd) < 1e-5, "case {case}");
        }
    }
}

#[test]
fn head_gradients_match_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let (problem, params) = random_problem(&mut rng, Activation::Tanh);
        let analytic = problem.evaluate(&params).unwrap().head_gradients();
        for (task, support) in problem.supports().iter().enumerate() {
            for &j in support {
                let mut p = params.clone();
                p.heads[task][j] += H;
                let up = problem.losses(&p).unwrap().values()[task];
                p.heads[task][j] -= 2.0 * H;
                let down = problem.losses(&p).unwrap().values()[task];
                let fd = (up - down) / (2.0 * H);
                assert!((analytic[task][j] - fd).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }
}

fn grads_at<'a>(
    problem: &'a ToyProblem,
    params: &Params,
    level: GradientLevel,
) -> impl Fn(&[f64]) -> mtlab_core::Result<TaskGradients> + 'a {
    let heads = params.heads.clone();
    move |w: &[f64]| {
        let p = Params {
            w: w.to_vec(),
            heads: heads.clone(),
        };
        let eval = problem.evaluate(&p)?;
        match level {
            GradientLevel::Parameter => eval.param_gradients(),
            GradientLevel::Feature => eval.feature_gradients(),
        }
    }
}

fn stencil(theta: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            let mut at = |offset: f64| {
                probe[k] = theta[k] + offset;
                let v = f(&probe);
                probe[k] = theta[k];
                v
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

#[test]
fn cosreg_gradient_agrees_with_stencil_and_analytic_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let lambda = 0.1;
    for case in 0..20 {
        let (problem, params) = random_problem(&mut rng, Activation::Tanh);
        let f = grads_at(&problem, &params, GradientLevel::Parameter);
        let fd = cosreg_gradient(&params.w, lambda, 1e-5, &f).unwrap();
        let oracle = stencil(&params.w, 1e-4, |w| {
            mtlab_core::combiners::cosreg_penalty(&f(w).unwrap(), lambda)
        });
        let e = rel_err(&fd, &oracle);
        assert!(e < 1e-4, "case {case}: fd vs stencil {e}");

        let eval = problem.evaluate(&params).unwrap();
        let column_grads = cosreg_penalty_gradient(&f(&params.w).unwrap(), lambda);
        let analytic = eval
            .pull_back_penalty(GradientLevel::Parameter, &column_grads)
            .unwrap();
        let e = rel_err(&analytic, &oracle);
        assert!(e < 1e-4, "case {case}: analytic vs stencil {e}");
    }
}

#[test]
fn feature_level_cosreg_is_flat_for_linear_heads() {
    // Feature column i is a scalar times head i, so its cosines with the
    // other columns cannot move with W: both routes must give zero.
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let lambda = 0.1;
    for _ in 0..20 {
        let (problem, params) = random_problem(&mut rng, Activation::Tanh);
        let f = grads_at(&problem, &params, GradientLevel::Feature);
        let fd = cosreg_gradient(&params.w, lambda, 1e-5, &f).unwrap();
        assert!(fd.iter().all(|v| v.abs() < 1e-9), "{fd:?}");
        let eval = problem.evaluate(&params).unwrap();
        let column_grads = cosreg_penalty_gradient(&f(&params.w).unwrap(), lambda);
        let analytic = eval
            .pull_back_penalty(GradientLevel::Feature, &column_grads)
            .unwrap();
        let reference: f64 = column_grads.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        assert!(
            analytic.iter().all(|v| v.abs() < 1e-12 * reference),
            "{analytic:?}"
        );
    }
}

#[test]
fn rank_one_inner_product_bridge() {
    // Identity activation, one sample: <dL_i/dW, dL_j/dW> = <dL_i/dz, dL_j/dz> |x|^2.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let spec = ProblemSpec {
            seed: rng.random(),
            samples: 1,
            tasks: 3,
            input_dim: 5,
            feature_dim: 9,
            overlap: 0.7,
            noise: 0.2,
            activation: Activation::Identity,
        };
        let problem = ToyProblem::new(spec).unwrap();
        let params = problem.init_params(&mut rng);
        let eval = problem.evaluate(&params).unwrap();
        let (gw, gz) = (
            eval.param_gradients().unwrap(),
            eval.feature_gradients().unwrap(),
        );
        let x2: f64 = problem.inputs().iter().map(|v| v * v).sum();
        let ip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for i in 0..3 {
            for j in 0..3 {
                let lhs = ip(gw.column(i), gw.column(j));
                let rhs = ip(gz.column(i), gz.column(j)) * x2;
                assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1e-300));
            }
        }
    }
}

#[test]
fn pull_back_of_arbitrary_column_weights() {
    // For fixed D, pull_back(D) is the W-gradient of sum_i <D_i, g_i(W)>.
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..20 {
        let (problem, params) = random_problem(&mut rng, Activation::Tanh);
        for level in [GradientLevel::Parameter, GradientLevel::Feature] {
            let f = grads_at(&problem, &params, level);
            let g = f(&params.w).unwrap();
            let d: Vec<f64> = (0..g.as_column_major().len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let oracle = stencil(&params.w, 1e-4, |w| {
                f(w).unwrap()
                    .as_column_major()
                    .iter()
                    .zip(&d)
                    .map(|(a, b)| a * b)
                    .sum()
            });
            let analytic = problem
                .evaluate(&params)
                .unwrap()
                .pull_back_penalty(level, &d)
                .unwrap();
            assert!(rel_err(&analytic, &oracle) < 1e-6, "{level}");
        }
    }
}
