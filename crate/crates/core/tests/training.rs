use mtlab_core::combiners::{cagrad, combine, CombinerConfig, CombinerState};
use mtlab_core::monitors::{series_score, Metric, Smoothing};
use mtlab_core::toylab::{train_run, Activation, ProblemSpec, ToyProblem, TrainConfig, TrainState};
use mtlab_core::{GradientLevel, Method};

fn spec(tasks: usize, overlap: f64) -> ProblemSpec {
    ProblemSpec {
        seed: 21,
        input_dim: 8,
        feature_dim: 16,
        tasks,
        samples: 64,
        overlap,
        noise: 0.0,
        activation: Activation::Tanh,
    }
}

#[test]
fn baseline_descends_on_a_realizable_problem() {
    let problem = ToyProblem::new(spec(3, 0.5)).unwrap();
    let config = TrainConfig {
        lr: 0.01,
        ..TrainConfig::default()
    };
    for seed in 0..3 {
        let out = train_run(
            &problem,
            Method::Baseline,
            GradientLevel::Parameter,
            100,
            seed,
            &config,
        )
        .unwrap();
        let totals: Vec<f64> = out.loss_history.iter().map(|l| l.total()).collect();
        assert!(totals.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
        assert!(out.final_losses.total() <= totals[99]);
    }
}

#[test]
fn baseline_and_mgda_both_improve_on_shared_supports() {
    let problem = ToyProblem::new(spec(2, 1.0)).unwrap();
    for seed in 0..3 {
        for method in [Method::Baseline, Method::Mgda] {
            let out = train_run(
                &problem,
                method,
                GradientLevel::Parameter,
                300,
                seed,
                &TrainConfig::default(),
            )
            .unwrap();
            assert!(
                out.final_losses.total() < out.loss_history[0].total(),
                "{method} seed {seed}"
            );
        }
    }
}

#[test]
fn disjoint_supports_give_disentangled_features() {
    let problem = ToyProblem::new(spec(2, 0.0)).unwrap();
    let out = train_run(
        &problem,
        Method::Baseline,
        GradientLevel::Parameter,
        500,
        0,
        &TrainConfig::default(),
    )
    .unwrap();
    let fd = series_score(&out.trajectory.series(Metric::Fd), 50, Smoothing::Default).unwrap();
    assert!(fd < 0.1 * 2f64.ln());
}

#[test]
fn monitoring_does_not_change_the_run() {
    let problem = ToyProblem::new(spec(3, 0.5)).unwrap();
    let on = TrainConfig::default();
    let off = TrainConfig {
        monitor: false,
        ..TrainConfig::default()
    };
    for method in Method::ALL {
        for level in [GradientLevel::Parameter, GradientLevel::Feature] {
            if level == GradientLevel::Feature && !method.accepts_feature_level() {
                continue;
            }
            let a = train_run(&problem, method, level, 30, 4, &on).unwrap();
            let b = train_run(&problem, method, level, 30, 4, &off).unwrap();
            assert_eq!(a.loss_history, b.loss_history, "{method} {level}");
            assert_eq!(
                a.final_state.params, b.final_state.params,
                "{method} {level}"
            );
            assert_eq!(a.trajectory.len(), 3);
            assert!(b.trajectory.is_empty());
        }
    }
}

#[test]
fn every_cell_runs() {
    let problem = ToyProblem::new(spec(4, 0.5)).unwrap();
    for method in Method::ALL {
        for level in [GradientLevel::Parameter, GradientLevel::Feature] {
            if level == GradientLevel::Feature && !method.accepts_feature_level() {
                continue;
            }
            let out = train_run(&problem, method, level, 50, 1, &TrainConfig::default()).unwrap();
            assert_eq!(out.trajectory.len(), 5, "{method} {level}");
            assert!(out.final_losses.values().iter().all(|l| l.is_finite()));
        }
    }
}

#[test]
fn cagrad_without_radius_is_the_scaled_baseline() {
    let problem = ToyProblem::new(spec(3, 0.5)).unwrap();
    let state = TrainState::new(&problem, Method::Baseline, 2).unwrap();
    let eval = problem.evaluate(&state.params).unwrap();
    let g = eval.param_gradients().unwrap();
    let combined = combine(
        &CombinerState::new(Method::Baseline, 3, 0).unwrap(),
        &g,
        eval.losses(),
        &CombinerConfig::default(),
    )
    .unwrap();
    let mean = cagrad(&g, 0.0, 100, 0.05).unwrap().direction.unwrap();
    for (s, m) in combined
        .direction
        .unwrap()
        .values()
        .iter()
        .zip(mean.values())
    {
        assert!((s / 3.0 - m).abs() <= 1e-15 * (1.0 + s.abs()));
    }
}

#[test]
fn full_feature_mask_pulls_back_to_the_gradient_sum() {
    let problem = ToyProblem::new(spec(3, 0.5)).unwrap();
    let state = TrainState::new(&problem, Method::GradDrop, 3).unwrap();
    let eval = problem.evaluate(&state.params).unwrap();
    let keep = vec![true; problem.feature_dim() * 3];
    let pulled = eval.masked_shared_gradient(&keep).unwrap();
    let sum = eval.param_gradients().unwrap().sum();
    for (a, b) in pulled.iter().zip(&sum) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}
