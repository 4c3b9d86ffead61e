//! Multi-task gradient combiners.
//!
//! Manipulation methods turn the task gradient matrix `G` into a single
//! update direction `G alpha`; balancing methods emit loss weights that the
//! trainer applies to shared and head gradients alike. Every function here is
//! pure: randomness comes from an explicit generator and persistent
//! per-method state is threaded through [`CombinerState`] by value.
//!
//! Feeding feature-level gradients into the same functions gives the
//! representation-level variants of each method.

mod aligned;
mod cagrad;
mod cosreg;
mod dwa;
mod famo;
mod graddrop;
mod gradnorm;
mod gradvac;
mod imtl;
mod mgda;
mod nash;
mod pcgrad;
mod random;
mod uncertainty;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{GradWeights, LossVector, SquareMatrix, TaskGradients, UpdateDirection};

pub use aligned::{aligned_gradients, aligned_mtl, aligned_transform, AlignedTransform};
pub use cagrad::cagrad;
pub use cosreg::{cosreg_gradient, cosreg_penalty, cosreg_penalty_gradient};
pub use dwa::dwa;
pub use famo::{famo_update, famo_weights};
pub use graddrop::{graddrop, graddrop_row};
pub use gradnorm::gradnorm;
pub use gradvac::{gradvac, TARGET_CLAMP};
pub use imtl::imtl;
pub use mgda::mgda;
pub use nash::nash_mtl;
pub use pcgrad::pcgrad;
pub use random::{random_weighting, softmax, RandomMode};
pub use uncertainty::{uncertainty, LOG_VARIANCE_BOUND};

/// Norms below this are treated as zero gradients.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Baseline,
    Manipulation,
    Balancing,
    Regularization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Plain sum of task gradients.
    Baseline,
    PcGrad,
    GradVac,
    GradDrop,
    Rgw,
    Mgda,
    CaGrad,
    NashMtl,
    AlignedMtl,
    Uncertainty,
    GradNorm,
    Imtl,
    Famo,
    Rlw,
    Dwa,
    CosReg,
}

impl Method {
    /// The benchmarked algorithms, in roster order (baseline excluded).
    pub const ROSTER: [Method; 15] = [
        Method::PcGrad,
        Method::GradVac,
        Method::GradDrop,
        Method::Rgw,
        Method::Mgda,
        Method::CaGrad,
        Method::NashMtl,
        Method::AlignedMtl,
        Method::Uncertainty,
        Method::GradNorm,
        Method::Imtl,
        Method::Famo,
        Method::Rlw,
        Method::Dwa,
        Method::CosReg,
    ];

    pub const ALL: [Method; 16] = [
        Method::Baseline,
        Method::PcGrad,
        Method::GradVac,
        Method::GradDrop,
        Method::Rgw,
        Method::Mgda,
        Method::CaGrad,
        Method::NashMtl,
        Method::AlignedMtl,
        Method::Uncertainty,
        Method::GradNorm,
        Method::Imtl,
        Method::Famo,
        Method::Rlw,
        Method::Dwa,
        Method::CosReg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::PcGrad => "pcgrad",
            Method::GradVac => "gradvac",
            Method::GradDrop => "graddrop",
            Method::Rgw => "rgw",
            Method::Mgda => "mgda",
            Method::CaGrad => "cagrad",
            Method::NashMtl => "nash-mtl",
            Method::AlignedMtl => "aligned-mtl",
            Method::Uncertainty => "uncertainty",
            Method::GradNorm => "gradnorm",
            Method::Imtl => "imtl",
            Method::Famo => "famo",
            Method::Rlw => "rlw",
            Method::Dwa => "dwa",
            Method::CosReg => "cosreg",
        }
    }

    pub fn family(self) -> Family {
        match self {
            Method::Baseline => Family::Baseline,
            Method::PcGrad
            | Method::GradVac
            | Method::GradDrop
            | Method::Rgw
            | Method::Mgda
            | Method::CaGrad
            | Method::NashMtl
            | Method::AlignedMtl => Family::Manipulation,
            Method::Uncertainty
            | Method::GradNorm
            | Method::Imtl
            | Method::Famo
            | Method::Rlw
            | Method::Dwa => Family::Balancing,
            Method::CosReg => Family::Regularization,
        }
    }

    /// Whether the method can be run on feature-level gradients. Balancing
    /// methods are benchmarked at the parameter level only.
    pub fn accepts_feature_level(self) -> bool {
        matches!(
            self.family(),
            Family::Manipulation | Family::Regularization | Family::Baseline
        )
    }

    pub fn registered_names() -> Vec<&'static str> {
        Method::ALL.iter().map(|m| m.name()).collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match key.as_str() {
            "nash" | "nashmtl" => "nash-mtl",
            "aligned" | "alignedmtl" => "aligned-mtl",
            "imtl-g" => "imtl",
            "vanilla" | "sum" => "baseline",
            other => other,
        };
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == alias)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method {s:?}; registered: {}",
                    Method::registered_names().join(", ")
                ))
            })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hyperparameters of every combiner, with the benchmark defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombinerConfig {
    pub mgda_max_iters: usize,
    pub mgda_tol: f64,
    pub gradvac_beta: f64,
    pub cagrad_c: f64,
    pub cagrad_iters: usize,
    pub cagrad_step: f64,
    pub nash_damping: f64,
    pub nash_max_iters: usize,
    pub nash_tol: f64,
    pub aligned_rank_tol: f64,
    pub gradnorm_gamma: f64,
    pub gradnorm_lr: f64,
    pub dwa_temperature: f64,
    pub uncertainty_lr: f64,
    pub famo_lr: f64,
    pub famo_eps: f64,
    pub cosreg_lambda: f64,
    pub cosreg_fd_step: f64,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        CombinerConfig {
            mgda_max_iters: crate::linalg::DEFAULT_MAX_ITERS,
            mgda_tol: crate::linalg::DEFAULT_TOL,
            gradvac_beta: 0.01,
            cagrad_c: 0.5,
            cagrad_iters: 100,
            cagrad_step: 0.05,
            nash_damping: 0.5,
            nash_max_iters: 200,
            nash_tol: 1e-6,
            aligned_rank_tol: 1e-9,
            gradnorm_gamma: 1.5,
            gradnorm_lr: 0.025,
            dwa_temperature: 2.0,
            uncertainty_lr: 0.05,
            famo_lr: 0.025,
            famo_eps: 1e-8,
            cosreg_lambda: 0.1,
            cosreg_fd_step: 1e-5,
        }
    }
}

/// Side information a combiner reports next to its output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// `alpha` with `direction = G alpha`, for methods whose output is a
    /// linear combination of the input columns.
    pub coefficients: Option<Vec<f64>>,
    /// GradDrop's kept entries, column-major like the input matrix.
    pub keep_mask: Option<Vec<bool>>,
    pub converged: bool,
    pub degenerate: bool,
    pub iterations: usize,
    pub residual: Option<f64>,
}

impl Diagnostics {
    pub(crate) fn converged() -> Self {
        Diagnostics {
            converged: true,
            ..Default::default()
        }
    }

    pub(crate) fn with_coefficients(coefficients: Vec<f64>) -> Self {
        Diagnostics {
            coefficients: Some(coefficients),
            converged: true,
            ..Default::default()
        }
    }
}

/// Output of a single combiner call, before state bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    pub direction: Option<UpdateDirection>,
    pub loss_weights: Option<GradWeights>,
    pub diagnostics: Diagnostics,
}

impl Combination {
    pub(crate) fn direction(values: Vec<f64>, diagnostics: Diagnostics) -> Result<Self> {
        Ok(Combination {
            direction: Some(UpdateDirection::new(values)?),
            loss_weights: None,
            diagnostics,
        })
    }

    pub(crate) fn weights(weights: GradWeights, diagnostics: Diagnostics) -> Self {
        Combination {
            direction: None,
            loss_weights: Some(weights),
            diagnostics,
        }
    }
}

/// Persistent per-run combiner state.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerState {
    pub method: Method,
    pub tasks: usize,
    /// GradVac cosine targets, one per ordered task pair.
    pub ema_targets: SquareMatrix,
    /// GradNorm reference losses, captured on the first call.
    pub initial_losses: Option<LossVector>,
    /// DWA history, oldest first, at most two entries.
    pub loss_history: VecDeque<LossVector>,
    /// FAMO logits.
    pub log_weights: Vec<f64>,
    /// Uncertainty log-variances.
    pub log_variances: Vec<f64>,
    /// GradNorm loss weights (sum to T).
    pub balancer_weights: GradWeights,
    pub rng: ChaCha8Rng,
    pub step_counter: u64,
}

impl CombinerState {
    pub fn new(method: Method, tasks: usize, seed: u64) -> Result<Self> {
        if tasks < 2 {
            return Err(Error::TooFewTasks(tasks));
        }
        Ok(CombinerState {
            method,
            tasks,
            ema_targets: SquareMatrix::zeros(tasks),
            initial_losses: None,
            loss_history: VecDeque::with_capacity(2),
            log_weights: vec![0.0; tasks],
            log_variances: vec![0.0; tasks],
            balancer_weights: GradWeights::ones(tasks),
            rng: ChaCha8Rng::seed_from_u64(seed),
            step_counter: 0,
        })
    }

    fn push_losses(&mut self, losses: &LossVector) {
        if self.loss_history.len() == 2 {
            self.loss_history.pop_front();
        }
        self.loss_history.push_back(losses.clone());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombineResult {
    pub direction: Option<UpdateDirection>,
    pub loss_weights: Option<GradWeights>,
    pub state: CombinerState,
    pub diagnostics: Diagnostics,
}

impl CombineResult {
    /// The per-task vector actually applied: loss weights for balancing
    /// methods, combination coefficients for manipulation methods.
    pub fn applied_weights(&self) -> Option<Vec<f64>> {
        self.loss_weights
            .as_ref()
            .map(|w| w.values().to_vec())
            .or_else(|| self.diagnostics.coefficients.clone())
    }
}

/// Run the state's method on one gradient matrix.
///
/// CosReg returns the plain gradient sum here; its regularizer gradient
/// depends on the objective and comes from [`cosreg_gradient`].
pub fn combine(
    state: &CombinerState,
    g: &TaskGradients,
    losses: &LossVector,
    config: &CombinerConfig,
) -> Result<CombineResult> {
    let t = g.tasks();
    if t != state.tasks {
        return Err(Error::Shape(format!(
            "state is for {} tasks, gradients have {t}",
            state.tasks
        )));
    }
    if losses.len() != t {
        return Err(Error::Shape(format!(
            "{} losses for {t} task gradients",
            losses.len()
        )));
    }
    let mut next = state.clone();
    next.step_counter += 1;

    let combination = match state.method {
        Method::Baseline | Method::CosReg => {
            Combination::direction(g.sum(), Diagnostics::with_coefficients(vec![1.0; t]))?
        }
        Method::PcGrad => pcgrad(g, &mut next.rng)?,
        Method::GradVac => {
            let (combination, targets) = gradvac(g, &state.ema_targets, config.gradvac_beta)?;
            next.ema_targets = targets;
            combination
        }
        Method::GradDrop => graddrop(g, &mut next.rng)?,
        Method::Rgw => random_weighting(g, &mut next.rng, RandomMode::Gradient)?,
        Method::Rlw => random_weighting(g, &mut next.rng, RandomMode::Loss)?,
        Method::Mgda => mgda(g, config.mgda_max_iters, config.mgda_tol)?,
        Method::CaGrad => cagrad(g, config.cagrad_c, config.cagrad_iters, config.cagrad_step)?,
        Method::NashMtl => nash_mtl(
            g,
            config.nash_damping,
            config.nash_max_iters,
            config.nash_tol,
        )?,
        Method::AlignedMtl => aligned_mtl(g, config.aligned_rank_tol)?,
        Method::Imtl => imtl(g)?,
        Method::GradNorm => {
            let initial = state
                .initial_losses
                .clone()
                .unwrap_or_else(|| losses.clone());
            let weights = gradnorm(
                g,
                losses,
                &initial,
                &state.balancer_weights,
                config.gradnorm_gamma,
                config.gradnorm_lr,
            )?;
            next.initial_losses = Some(initial);
            next.balancer_weights = weights.clone();
            Combination::weights(weights, Diagnostics::converged())
        }
        Method::Dwa => {
            let history: Vec<LossVector> = state.loss_history.iter().cloned().collect();
            let weights = dwa(&history, t, config.dwa_temperature)?;
            next.push_losses(losses);
            Combination::weights(weights, Diagnostics::converged())
        }
        Method::Uncertainty => {
            let (weights, log_variances) =
                uncertainty(losses, &state.log_variances, config.uncertainty_lr)?;
            next.log_variances = log_variances;
            Combination::weights(weights, Diagnostics::converged())
        }
        Method::Famo => {
            let weights = famo_weights(losses, &state.log_weights, config.famo_eps)?;
            Combination::weights(weights, Diagnostics::converged())
        }
    };

    if let Some(direction) = &combination.direction {
        if direction.len() != g.dim() {
            return Err(Error::Shape(
                "direction length differs from gradient dimension".into(),
            ));
        }
    }
    Ok(CombineResult {
        direction: combination.direction,
        loss_weights: combination.loss_weights,
        state: next,
        diagnostics: combination.diagnostics,
    })
}

/// FAMO's logit update once the trainer has taken its step and observed the
/// new losses. Other methods pass through unchanged.
pub fn after_step(
    state: &CombinerState,
    previous: &LossVector,
    current: &LossVector,
    config: &CombinerConfig,
) -> Result<CombinerState> {
    let mut next = state.clone();
    if state.method == Method::Famo {
        next.log_weights = famo_update(
            &state.log_weights,
            previous,
            current,
            config.famo_lr,
            config.famo_eps,
        )?;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GradientLevel;

    fn sample() -> (TaskGradients, LossVector) {
        let g = TaskGradients::from_columns(
            &[
                vec![1.0, -0.5, 0.25],
                vec![-0.75, 1.0, 0.5],
                vec![0.3, 0.3, -1.0],
            ],
            GradientLevel::Parameter,
        )
        .unwrap();
        (g, LossVector::new(vec![1.0, 2.0, 0.5]).unwrap())
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("nash".parse::<Method>().unwrap(), Method::NashMtl);
        assert!("foo".parse::<Method>().is_err());
    }

    #[test]
    fn roster_counts() {
        let count = |f| Method::ROSTER.iter().filter(|m| m.family() == f).count();
        assert_eq!(count(Family::Manipulation), 8);
        assert_eq!(count(Family::Balancing), 6);
        assert_eq!(count(Family::Regularization), 1);
    }

    #[test]
    fn every_method_emits_output_and_counts_steps() {
        let (g, losses) = sample();
        for method in Method::ALL {
            let state = CombinerState::new(method, 3, 7).unwrap();
            let r = combine(&state, &g, &losses, &CombinerConfig::default()).unwrap();
            assert!(
                r.direction.is_some() || r.loss_weights.is_some(),
                "{method}"
            );
            assert_eq!(r.state.step_counter, 1);
            let again = combine(&r.state, &g, &losses, &CombinerConfig::default()).unwrap();
            assert_eq!(again.state.step_counter, 2);
        }
    }

    #[test]
    fn combine_is_deterministic() {
        let (g, losses) = sample();
        for method in Method::ALL {
            let state = CombinerState::new(method, 3, 99).unwrap();
            let a = combine(&state, &g, &losses, &CombinerConfig::default()).unwrap();
            let b = combine(&state, &g, &losses, &CombinerConfig::default()).unwrap();
            assert_eq!(a, b, "{method}");
        }
    }

    #[test]
    fn shape_checks() {
        let (g, _) = sample();
        let state = CombinerState::new(Method::Mgda, 2, 0).unwrap();
        let losses = LossVector::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(combine(&state, &g, &losses, &CombinerConfig::default()).is_err());
        let state = CombinerState::new(Method::Mgda, 3, 0).unwrap();
        let short = LossVector::new(vec![1.0]).unwrap();
        assert!(combine(&state, &g, &short, &CombinerConfig::default()).is_err());
    }

    #[test]
    fn dwa_history_keeps_two_entries() {
        let (g, _) = sample();
        let mut state = CombinerState::new(Method::Dwa, 3, 0).unwrap();
        for k in 1..=4 {
            let losses = LossVector::new(vec![k as f64; 3]).unwrap();
            state = combine(&state, &g, &losses, &CombinerConfig::default())
                .unwrap()
                .state;
        }
        assert_eq!(state.loss_history.len(), 2);
        assert_eq!(state.loss_history[1].values()[0], 4.0);
    }
}
