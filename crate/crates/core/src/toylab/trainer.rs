use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Params, ToyProblem};
use crate::combiners::{
    self, cosreg_penalty_gradient, CombinerConfig, CombinerState, Family, Method,
};
use crate::error::{Error, Result};
use crate::monitors::{fd_entropy, gds, gms, InterferenceSnapshot, Trajectory};
use crate::types::{axpy, GradientLevel, LossVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Snapshot every `cadence` iterations.
    pub cadence: usize,
    /// Monitoring switch; it never changes the optimization path.
    pub monitor: bool,
    #[serde(flatten)]
    pub combiner: CombinerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            cadence: 10,
            monitor: true,
            combiner: CombinerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: Params,
    pub combiner: CombinerState,
    /// Steps taken so far.
    pub iteration: usize,
}

impl TrainState {
    /// Draws the starting point and the combiner's random stream from `seed`.
    pub fn new(problem: &ToyProblem, method: Method, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = problem.init_params(&mut rng);
        let combiner = CombinerState::new(method, problem.tasks(), rng.random())?;
        Ok(TrainState {
            params,
            combiner,
            iteration: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: TrainState,
    /// Losses at the parameters the step started from.
    pub losses: LossVector,
    pub snapshot: Option<InterferenceSnapshot>,
    /// The combiner fell back to a default (no convergence or a degenerate input).
    pub fallback: bool,
}

fn check_level(method: Method, level: GradientLevel) -> Result<()> {
    if level == GradientLevel::Feature && !method.accepts_feature_level() {
        return Err(Error::InvalidArgument(format!(
            "{method} runs on parameter-level gradients only"
        )));
    }
    Ok(())
}

/// One gradient-descent step.
///
/// Manipulation methods replace the shared update with their combined
/// direction; on feature-level input the combination coefficients (or
/// GradDrop's per-feature masks) are pulled back to the shared weights.
/// Loss weights scale both the shared gradients and the heads.
pub fn train_step(
    problem: &ToyProblem,
    state: &TrainState,
    level: GradientLevel,
    config: &TrainConfig,
) -> Result<Step> {
    let iteration = state.iteration + 1;
    let diverged = |e: Error| match e {
        Error::NonFinite(_) => Error::DivergenceDetected { iteration },
        other => other,
    };
    step_inner(problem, state, level, config).map_err(diverged)
}

fn step_inner(
    problem: &ToyProblem,
    state: &TrainState,
    level: GradientLevel,
    config: &TrainConfig,
) -> Result<Step> {
    let method = state.combiner.method;
    check_level(method, level)?;
    let iteration = state.iteration + 1;
    let eval = problem.evaluate(&state.params)?;
    let losses = eval.losses().clone();
    let param_grads = eval.param_gradients()?;
    let input = match level {
        GradientLevel::Parameter => param_grads.clone(),
        GradientLevel::Feature => eval.feature_gradients()?,
    };

    let result = combiners::combine(&state.combiner, &input, &losses, &config.combiner)?;
    let fallback = !result.diagnostics.converged || result.diagnostics.degenerate;
    let t = problem.tasks();
    let mut head_scale = vec![1.0; t];
    let shared = match method.family() {
        Family::Baseline => param_grads.sum(),
        Family::Regularization => {
            let column_grads = cosreg_penalty_gradient(&input, config.combiner.cosreg_lambda);
            let mut update = param_grads.sum();
            let reg = eval.pull_back_penalty(level, &column_grads)?;
            axpy(1.0, &reg, &mut update);
            update
        }
        Family::Manipulation | Family::Balancing => match (&result.loss_weights, level) {
            (Some(weights), _) => {
                head_scale = weights.values().to_vec();
                param_grads.combine(weights.values())
            }
            (None, GradientLevel::Parameter) => result
                .direction
                .as_ref()
                .map(|d| d.values().to_vec())
                .ok_or_else(|| Error::InvalidArgument(format!("{method} produced no update")))?,
            (None, GradientLevel::Feature) => {
                if let Some(keep) = &result.diagnostics.keep_mask {
                    eval.masked_shared_gradient(keep)?
                } else {
                    let alpha = result.diagnostics.coefficients.as_ref().ok_or_else(|| {
                        Error::InvalidArgument(format!("{method} has no coefficients to pull back"))
                    })?;
                    param_grads.combine(alpha)
                }
            }
        },
    };

    let lr = config.lr;
    let mut params = state.params.clone();
    axpy(-lr, &shared, &mut params.w);
    for ((head, grad), scale) in params
        .heads
        .iter_mut()
        .zip(eval.head_gradients())
        .zip(&head_scale)
    {
        axpy(-lr * scale, &grad, head);
    }
    if !params.is_finite() {
        return Err(Error::DivergenceDetected { iteration });
    }

    let snapshot_due =
        config.monitor && config.cadence > 0 && iteration.is_multiple_of(config.cadence);
    let mut combiner = result.state.clone();
    if method == Method::Famo || snapshot_due {
        let after = problem.losses(&params)?;
        combiner = combiners::after_step(&combiner, &losses, &after, &config.combiner)?;
        let snapshot = if snapshot_due {
            Some(InterferenceSnapshot {
                iteration,
                losses: after.into_inner(),
                gds: gds(&param_grads),
                gms: gms(&param_grads),
                fd: fd_entropy(&eval.saliencies()?)?.value,
                applied_weights: result.applied_weights(),
            })
        } else {
            None
        };
        return Ok(Step {
            state: TrainState {
                params,
                combiner,
                iteration,
            },
            losses,
            snapshot,
            fallback,
        });
    }
    Ok(Step {
        state: TrainState {
            params,
            combiner,
            iteration,
        },
        losses,
        snapshot: None,
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    /// Losses at the start of every step.
    pub loss_history: Vec<LossVector>,
    pub final_losses: LossVector,
    pub final_state: TrainState,
    /// Steps on which the combiner reported a fallback.
    pub fallback_steps: usize,
}

/// `iters` steps of one method from the seed's starting point.
pub fn train_run(
    problem: &ToyProblem,
    method: Method,
    level: GradientLevel,
    iters: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<RunOutput> {
    if iters == 0 {
        return Err(Error::InvalidArgument("iters must be at least 1".into()));
    }
    if config.cadence == 0 {
        return Err(Error::InvalidArgument("cadence must be at least 1".into()));
    }
    check_level(method, level)?;
    let mut state = TrainState::new(problem, method, seed)?;
    let mut trajectory = Trajectory::new(method.name(), level, seed);
    let mut loss_history = Vec::with_capacity(iters);
    let mut fallback_steps = 0;
    for _ in 0..iters {
        let step = train_step(problem, &state, level, config)?;
        fallback_steps += usize::from(step.fallback);
        loss_history.push(step.losses);
        if let Some(s) = step.snapshot {
            trajectory.push(s)?;
        }
        state = step.state;
    }
    let final_losses = problem
        .losses(&state.params)
        .map_err(|_| Error::DivergenceDetected { iteration: iters })?;
    Ok(RunOutput {
        trajectory,
        loss_history,
        final_losses,
        final_state: state,
        fallback_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toylab::{Activation, ProblemSpec};

    fn problem(overlap: f64) -> ToyProblem {
        ToyProblem::new(ProblemSpec {
            seed: 1,
            input_dim: 6,
            feature_dim: 8,
            tasks: 3,
            samples: 32,
            overlap,
            noise: 0.0,
            activation: Activation::Tanh,
        })
        .unwrap()
    }

    #[test]
    fn cadence_arithmetic() {
        let p = problem(0.5);
        let out = train_run(
            &p,
            Method::Baseline,
            GradientLevel::Parameter,
            100,
            0,
            &TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(out.trajectory.len(), 10);
        assert_eq!(out.trajectory.snapshots()[9].iteration, 100);
        assert_eq!(out.loss_history.len(), 100);
        assert_eq!(
            out.trajectory.snapshots()[9].losses,
            out.final_losses.values()
        );
    }

    #[test]
    fn baseline_direction_is_the_sum() {
        let p = problem(0.5);
        let state = TrainState::new(&p, Method::Baseline, 5).unwrap();
        let config = TrainConfig::default();
        let step = train_step(&p, &state, GradientLevel::Parameter, &config).unwrap();
        let sum = p
            .evaluate(&state.params)
            .unwrap()
            .param_gradients()
            .unwrap()
            .sum();
        for ((new, old), g) in step.state.params.w.iter().zip(&state.params.w).zip(&sum) {
            assert_eq!(*new, old - config.lr * g);
        }
    }

    #[test]
    fn deterministic_steps() {
        let p = problem(1.0);
        for method in Method::ALL {
            let a = TrainState::new(&p, method, 9).unwrap();
            let b = TrainState::new(&p, method, 9).unwrap();
            let config = TrainConfig::default();
            let sa = train_step(&p, &a, GradientLevel::Parameter, &config).unwrap();
            let sb = train_step(&p, &b, GradientLevel::Parameter, &config).unwrap();
            assert_eq!(sa, sb, "{method}");
        }
    }

    #[test]
    fn feature_level_is_rejected_for_balancing() {
        let p = problem(0.5);
        let r = train_run(
            &p,
            Method::Dwa,
            GradientLevel::Feature,
            10,
            0,
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn divergence_names_the_iteration() {
        let p = problem(0.5);
        let config = TrainConfig {
            lr: 1e6,
            ..TrainConfig::default()
        };
        match train_run(
            &p,
            Method::Baseline,
            GradientLevel::Parameter,
            50,
            0,
            &config,
        ) {
            Err(Error::DivergenceDetected { iteration }) => {
                assert!((1..=50).contains(&iteration))
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
