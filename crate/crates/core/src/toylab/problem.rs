use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{dot, GradientLevel, LossVector, TaskGradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Tanh,
}

impl Activation {
    fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Identity => u,
            Activation::Tanh => u.tanh(),
        }
    }

    /// First and second derivative at `u`.
    fn derivatives(self, u: f64) -> (f64, f64) {
        match self {
            Activation::Identity => (1.0, 0.0),
            Activation::Tanh => {
                let a = u.tanh();
                let d1 = 1.0 - a * a;
                (d1, -2.0 * a * d1)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidArgument(format!(
                "unknown activation {other:?}"
            ))),
        }
    }
}

/// Everything that determines a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSpec {
    #[serde(rename = "problem_seed")]
    pub seed: u64,
    pub input_dim: usize,
    pub feature_dim: usize,
    pub tasks: usize,
    pub samples: usize,
    /// Fraction of each planted support shared by all tasks.
    pub overlap: f64,
    pub noise: f64,
    pub activation: Activation,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            seed: 0,
            input_dim: 16,
            feature_dim: 32,
            tasks: 7,
            samples: 256,
            overlap: 0.5,
            noise: 0.0,
            activation: Activation::Tanh,
        }
    }
}

/// Trainable parameters: `w` is m x n row-major, `heads[i]` has length m and
/// is zero off task i's support.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w: Vec<f64>,
    pub heads: Vec<Vec<f64>>,
}

impl Params {
    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(self.heads.iter().flatten())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyProblem {
    spec: ProblemSpec,
    /// N x n row-major.
    x: Vec<f64>,
    targets: Vec<Vec<f64>>,
    supports: Vec<Vec<usize>>,
    masks: Vec<Vec<f64>>,
    planted: Params,
}

fn gaussian(rng: &mut ChaCha8Rng, count: usize, scale: f64) -> Vec<f64> {
    (0..count)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

impl ToyProblem {
    /// Builds a problem. Supports have `ceil(m / T)` coordinates of which a
    /// fraction `overlap` (rounded up) is common to every task; the private
    /// remainder is shrunk when the features cannot hold T disjoint blocks.
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        let ProblemSpec {
            input_dim: n,
            feature_dim: m,
            tasks: t,
            samples,
            overlap,
            noise,
            ..
        } = spec;
        if n == 0 || m == 0 || samples == 0 {
            return Err(Error::InvalidArgument(
                "dimensions and sample count must be positive".into(),
            ));
        }
        if t < 2 {
            return Err(Error::TooFewTasks(t));
        }
        if !(0.0..=1.0).contains(&overlap) {
            return Err(Error::InvalidArgument(format!(
                "overlap must lie in [0, 1], got {overlap}"
            )));
        }
        if !noise.is_finite() || noise < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise must be nonnegative, got {noise}"
            )));
        }

        let size = m.div_ceil(t);
        let shared = if overlap == 0.0 {
            0
        } else {
            ((overlap * size as f64).ceil() as usize).min(size)
        };
        let private = (size - shared).min((m - shared) / t);
        if shared + private == 0 {
            return Err(Error::InfeasibleDisjointSupports {
                tasks: t,
                features: m,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut coords: Vec<usize> = (0..m).collect();
        coords.shuffle(&mut rng);
        let supports: Vec<Vec<usize>> = (0..t)
            .map(|i| {
                let mut s: Vec<usize> = coords[..shared].to_vec();
                s.extend_from_slice(&coords[shared + i * private..shared + (i + 1) * private]);
                s.sort_unstable();
                s
            })
            .collect();
        let masks: Vec<Vec<f64>> = supports
            .iter()
            .map(|s| {
                let mut mask = vec![0.0; m];
                s.iter().for_each(|&j| mask[j] = 1.0);
                mask
            })
            .collect();

        let x = gaussian(&mut rng, samples * n, 1.0);
        let planted_w = gaussian(&mut rng, m * n, 1.0 / (n as f64).sqrt());
        let planted_heads: Vec<Vec<f64>> = masks
            .iter()
            .map(|mask| {
                gaussian(&mut rng, m, 1.0)
                    .iter()
                    .zip(mask)
                    .map(|(v, k)| v * k)
                    .collect()
            })
            .collect();
        let planted = Params {
            w: planted_w,
            heads: planted_heads,
        };

        let mut problem = ToyProblem {
            spec,
            x,
            targets: vec![vec![0.0; samples]; t],
            supports,
            masks,
            planted,
        };
        let features = problem.features(&problem.planted.w);
        let mut targets = Vec::with_capacity(t);
        for head in &problem.planted.heads {
            let clean = (0..samples).map(|k| dot(head, &features[k * m..(k + 1) * m]));
            let eps = gaussian(&mut rng, samples, noise);
            targets.push(clean.zip(eps).map(|(c, e)| c + e).collect());
        }
        problem.targets = targets;
        Ok(problem)
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn tasks(&self) -> usize {
        self.spec.tasks
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim
    }

    pub fn samples(&self) -> usize {
        self.spec.samples
    }

    pub fn inputs(&self) -> &[f64] {
        &self.x
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    pub fn masks(&self) -> &[Vec<f64>] {
        &self.masks
    }

    pub fn planted(&self) -> &Params {
        &self.planted
    }

    /// Random starting point drawn from `rng`.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Params {
        let (n, m) = (self.input_dim(), self.feature_dim());
        let mut normal = |count: usize, scale: f64| -> Vec<f64> {
            (0..count)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let w = normal(m * n, 1.0 / (n as f64).sqrt());
        let heads = self
            .masks
            .iter()
            .map(|mask| {
                normal(m, 1.0 / (m as f64).sqrt())
                    .iter()
                    .zip(mask)
                    .map(|(v, k)| v * k)
                    .collect()
            })
            .collect();
        Params { w, heads }
    }

    pub fn zero_params(&self) -> Params {
        Params {
            w: vec![0.0; self.feature_dim() * self.input_dim()],
            heads: vec![vec![0.0; self.feature_dim()]; self.tasks()],
        }
    }

    fn check(&self, params: &Params) -> Result<()> {
        let (n, m) = (self.input_dim(), self.feature_dim());
        if params.w.len() != m * n
            || params.heads.len() != self.tasks()
            || params.heads.iter().any(|h| h.len() != m)
        {
            return Err(Error::Shape("parameters do not match the problem".into()));
        }
        Ok(())
    }

    fn pre_activations(&self, w: &[f64]) -> Vec<f64> {
        let (n, m) = (self.input_dim(), self.feature_dim());
        let mut u = Vec::with_capacity(self.samples() * m);
        for xk in self.x.chunks_exact(n) {
            u.extend(w.chunks_exact(n).map(|row| dot(row, xk)));
        }
        u
    }

    /// Shared representation `Z`, N x m row-major.
    pub fn features(&self, w: &[f64]) -> Vec<f64> {
        let act = self.spec.activation;
        self.pre_activations(w)
            .into_iter()
            .map(|u| act.apply(u))
            .collect()
    }

    /// Task losses evaluated on a given representation (N x m row-major).
    pub fn losses_from_features(&self, heads: &[Vec<f64>], z: &[f64]) -> Result<LossVector> {
        let m = self.feature_dim();
        if z.len() != self.samples() * m || heads.len() != self.tasks() {
            return Err(Error::Shape("features do not match the problem".into()));
        }
        let values = heads
            .iter()
            .zip(&self.targets)
            .map(|(head, y)| {
                z.chunks_exact(m)
                    .zip(y)
                    .map(|(zk, yk)| (dot(head, zk) - yk).powi(2))
                    .sum::<f64>()
                    / self.samples() as f64
            })
            .collect();
        LossVector::new(values)
    }

    pub fn losses(&self, params: &Params) -> Result<LossVector> {
        self.check(params)?;
        self.losses_from_features(&params.heads, &self.features(&params.w))
    }

    /// Forward pass with everything the backward formulas need.
    pub fn evaluate(&self, params: &Params) -> Result<Evaluation<'_>> {
        self.check(params)?;
        let act = self.spec.activation;
        let m = self.feature_dim();
        let u = self.pre_activations(&params.w);
        let mut z = Vec::with_capacity(u.len());
        let mut d1 = Vec::with_capacity(u.len());
        let mut d2 = Vec::with_capacity(u.len());
        for &v in &u {
            z.push(act.apply(v));
            let (a, b) = act.derivatives(v);
            d1.push(a);
            d2.push(b);
        }
        let residuals: Vec<Vec<f64>> = params
            .heads
            .iter()
            .zip(&self.targets)
            .map(|(head, y)| {
                z.chunks_exact(m)
                    .zip(y)
                    .map(|(zk, yk)| dot(head, zk) - yk)
                    .collect()
            })
            .collect();
        let losses = residuals
            .iter()
            .map(|e| e.iter().map(|v| v * v).sum::<f64>() / self.samples() as f64)
            .collect();
        Ok(Evaluation {
            problem: self,
            params: params.clone(),
            z,
            d1,
            d2,
            residuals,
            losses: LossVector::new(losses)?,
        })
    }
}

/// One forward pass; the backward quantities are derived on demand.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    problem: &'a ToyProblem,
    params: Params,
    z: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    residuals: Vec<Vec<f64>>,
    losses: LossVector,
}

impl Evaluation<'_> {
    pub fn losses(&self) -> &LossVector {
        &self.losses
    }

    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }

    fn dims(&self) -> (usize, usize, usize) {
        (
            self.problem.input_dim(),
            self.problem.feature_dim(),
            self.problem.samples(),
        )
    }

    /// `sum_k (2/N) e_ik (s_i . act'(u_k)) x_k^T` for a per-feature backprop
    /// vector `s_i`; with `s_i = v_i` this is task i's shared gradient.
    fn shared_backprop(&self, task: usize, feature_scale: &[f64]) -> Vec<f64> {
        let (n, m, samples) = self.dims();
        let mut out = vec![0.0; m * n];
        let coeff = 2.0 / samples as f64;
        for k in 0..samples {
            let e = coeff * self.residuals[task][k];
            if e == 0.0 {
                continue;
            }
            let xk = &self.problem.x[k * n..(k + 1) * n];
            let d1 = &self.d1[k * m..(k + 1) * m];
            for j in 0..m {
                let b = e * feature_scale[j] * d1[j];
                if b != 0.0 {
                    out[j * n..(j + 1) * n]
                        .iter_mut()
                        .zip(xk)
                        .for_each(|(o, x)| *o += b * x);
                }
            }
        }
        out
    }

    /// Task i's gradient with respect to `W`, flattened row-major.
    pub fn shared_gradient(&self, task: usize) -> Vec<f64> {
        self.shared_backprop(task, &self.params.heads[task])
    }

    /// Parameter-level gradient matrix, one column per task (d = m n).
    pub fn param_gradients(&self) -> Result<TaskGradients> {
        let columns: Vec<Vec<f64>> = (0..self.problem.tasks())
            .map(|i| self.shared_gradient(i))
            .collect();
        TaskGradients::from_columns(&columns, GradientLevel::Parameter)
    }

    /// Feature-level gradient matrix: `sum_k dL_i/dz_k`, the gradient of each
    /// task loss with respect to a perturbation shared by every sample's
    /// representation (d = m).
    pub fn feature_gradients(&self) -> Result<TaskGradients> {
        let samples = self.problem.samples() as f64;
        let columns: Vec<Vec<f64>> = self
            .params
            .heads
            .iter()
            .zip(&self.residuals)
            .map(|(head, e)| {
                let s = 2.0 * e.iter().sum::<f64>() / samples;
                head.iter().map(|v| s * v).collect()
            })
            .collect();
        TaskGradients::from_columns(&columns, GradientLevel::Feature)
    }

    /// Per-sample saliencies `dL_i/dZ_kj`, one location per (sample, feature)
    /// entry of the representation (d = N m).
    pub fn saliencies(&self) -> Result<TaskGradients> {
        let (_, m, samples) = self.dims();
        let coeff = 2.0 / samples as f64;
        let columns: Vec<Vec<f64>> = self
            .params
            .heads
            .iter()
            .zip(&self.residuals)
            .map(|(head, e)| {
                let mut c = Vec::with_capacity(samples * m);
                for ek in e {
                    c.extend(head.iter().map(|v| coeff * ek * v));
                }
                c
            })
            .collect();
        TaskGradients::from_columns(&columns, GradientLevel::Feature)
    }

    /// Head gradients, zero off each task's support.
    pub fn head_gradients(&self) -> Vec<Vec<f64>> {
        let (_, m, samples) = self.dims();
        let coeff = 2.0 / samples as f64;
        self.residuals
            .iter()
            .zip(self.problem.masks())
            .map(|(e, mask)| {
                let mut g = vec![0.0; m];
                for (k, ek) in e.iter().enumerate() {
                    let zk = &self.z[k * m..(k + 1) * m];
                    g.iter_mut()
                        .zip(zk)
                        .for_each(|(gj, zj)| *gj += coeff * ek * zj);
                }
                g.iter_mut().zip(mask).for_each(|(gj, k)| *gj *= k);
                g
            })
            .collect()
    }

    /// Shared gradient of `sum_i sum_j keep_ij dL_i/dz_j`: the feature-level
    /// update given per-task feature masks (column-major m x T, as GradDrop
    /// reports them), pulled back to `W`.
    pub fn masked_shared_gradient(&self, keep: &[bool]) -> Result<Vec<f64>> {
        let (n, m, _) = self.dims();
        let t = self.problem.tasks();
        if keep.len() != m * t {
            return Err(Error::Shape(format!(
                "keep mask has {} entries, expected {}",
                keep.len(),
                m * t
            )));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..t {
            let scale: Vec<f64> = self.params.heads[i]
                .iter()
                .zip(&keep[i * m..(i + 1) * m])
                .map(|(v, k)| if *k { *v } else { 0.0 })
                .collect();
            out.iter_mut()
                .zip(self.shared_backprop(i, &scale))
                .for_each(|(o, g)| *o += g);
        }
        Ok(out)
    }

    /// Hessian of task i's loss with respect to `W`, applied to the m x n
    /// direction `a`.
    pub fn hessian_vector(&self, task: usize, a: &[f64]) -> Vec<f64> {
        let (n, m, samples) = self.dims();
        let coeff = 2.0 / samples as f64;
        let head = &self.params.heads[task];
        let mut out = vec![0.0; m * n];
        let mut r = vec![0.0; m];
        for k in 0..samples {
            let xk = &self.problem.x[k * n..(k + 1) * n];
            let d1 = &self.d1[k * m..(k + 1) * m];
            let d2 = &self.d2[k * m..(k + 1) * m];
            for (j, rj) in r.iter_mut().enumerate() {
                *rj = if head[j] == 0.0 {
                    0.0
                } else {
                    dot(&a[j * n..(j + 1) * n], xk)
                };
            }
            let de: f64 = (0..m).map(|j| head[j] * d1[j] * r[j]).sum();
            let e = self.residuals[task][k];
            for j in 0..m {
                let b = coeff * head[j] * (de * d1[j] + e * d2[j] * r[j]);
                if b != 0.0 {
                    out[j * n..(j + 1) * n]
                        .iter_mut()
                        .zip(xk)
                        .for_each(|(o, x)| *o += b * x);
                }
            }
        }
        out
    }

    /// Gradient with respect to `W` of the cosine penalty on the chosen
    /// gradient level, given the penalty's gradient with respect to each
    /// column (column-major, as returned by `cosreg_penalty_gradient`).
    pub fn pull_back_penalty(
        &self,
        level: GradientLevel,
        column_grads: &[f64],
    ) -> Result<Vec<f64>> {
        let (n, m, samples) = self.dims();
        let t = self.problem.tasks();
        let mut out = vec![0.0; m * n];
        match level {
            GradientLevel::Parameter => {
                if column_grads.len() != m * n * t {
                    return Err(Error::Shape("penalty gradient does not match W".into()));
                }
                for i in 0..t {
                    let hv = self.hessian_vector(i, &column_grads[i * m * n..(i + 1) * m * n]);
                    out.iter_mut().zip(hv).for_each(|(o, h)| *o += h);
                }
            }
            GradientLevel::Feature => {
                if column_grads.len() != m * t {
                    return Err(Error::Shape("penalty gradient does not match Z".into()));
                }
                // Feature column i is (2/N) (sum_k e_ik) v_i; only the residual sum moves with W.
                for i in 0..t {
                    let head = &self.params.heads[i];
                    let s = 2.0 / samples as f64 * dot(head, &column_grads[i * m..(i + 1) * m]);
                    if s == 0.0 {
                        continue;
                    }
                    for k in 0..samples {
                        let xk = &self.problem.x[k * n..(k + 1) * n];
                        let d1 = &self.d1[k * m..(k + 1) * m];
                        for j in 0..m {
                            let b = s * head[j] * d1[j];
                            if b != 0.0 {
                                out[j * n..(j + 1) * n]
                                    .iter_mut()
                                    .zip(xk)
                                    .for_each(|(o, x)| *o += b * x);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
