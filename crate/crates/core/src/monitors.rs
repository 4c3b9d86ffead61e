//! Interference and disentanglement metrics, trajectory smoothing and
//! ranking agreement.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{dot, GradientLevel, TaskGradients};

const ZERO_NORM: f64 = 1e-12;
const ZERO_SALIENCY: f64 = 1e-12;

fn mean_over_pairs(g: &TaskGradients, pair: impl Fn(usize, usize, &[f64]) -> f64) -> f64 {
    let t = g.tasks();
    let norms = g.norms();
    let mut total = 0.0;
    for i in 0..t {
        for j in 0..t {
            if i != j {
                total += pair(i, j, &norms);
            }
        }
    }
    total / (t * (t - 1)) as f64
}

/// Gradient direction similarity: mean pairwise cosine over ordered pairs.
/// Pairs involving a zero gradient contribute 0.
pub fn gds(g: &TaskGradients) -> f64 {
    mean_over_pairs(g, |i, j, norms| {
        if norms[i] < ZERO_NORM || norms[j] < ZERO_NORM {
            0.0
        } else {
            (dot(g.column(i), g.column(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0)
        }
    })
}

/// Gradient magnitude similarity: mean of `2 |g_i| |g_j| / (|g_i|^2 + |g_j|^2)`.
/// Two zero gradients match perfectly; one zero gradient does not match.
pub fn gms(g: &TaskGradients) -> f64 {
    mean_over_pairs(g, |i, j, norms| {
        let (a, b) = (norms[i], norms[j]);
        match (a < ZERO_NORM, b < ZERO_NORM) {
            (true, true) => 1.0,
            (true, false) | (false, true) => 0.0,
            _ => {
                // Scale first so the squares cannot overflow.
                let s = a.max(b);
                let (a, b) = (a / s, b / s);
                (2.0 * a * b / (a * a + b * b)).min(1.0)
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdEntropy {
    pub value: f64,
    /// Locations with nonzero total saliency.
    pub included: usize,
    /// Set when every location was excluded.
    pub degenerate: bool,
}

/// Mean entropy of the per-location task saliency distribution.
///
/// Each row of the feature-level gradient matrix is one location; its
/// absolute entries are normalized into a distribution over tasks.
pub fn fd_entropy(g: &TaskGradients) -> Result<FdEntropy> {
    if g.level() != GradientLevel::Feature {
        return Err(Error::WrongGradientLevel {
            expected: "feature-level",
        });
    }
    let t = g.tasks();
    let columns: Vec<&[f64]> = g.columns().collect();
    let mut total = 0.0;
    let mut included = 0;
    for j in 0..g.dim() {
        let sum: f64 = columns.iter().map(|c| c[j].abs()).sum();
        if sum.is_nan() || sum < ZERO_SALIENCY {
            continue;
        }
        included += 1;
        let mut h = 0.0;
        for c in &columns[..t] {
            let p = c[j].abs() / sum;
            if p > 0.0 {
                h -= p * p.ln();
            }
        }
        total += h;
    }
    if included == 0 {
        return Ok(FdEntropy {
            value: 0.0,
            included: 0,
            degenerate: true,
        });
    }
    let cap = (t as f64).ln();
    Ok(FdEntropy {
        value: (total / included as f64).clamp(0.0, cap),
        included,
        degenerate: false,
    })
}

/// Smoothing window used when none is given: a tenth of the series length.
pub fn default_window(len: usize) -> usize {
    (len / 10).max(1)
}

/// Trailing moving average with a shrinking window at the head, so the
/// output lines up with the input index by index.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..series.len())
        .map(|t| {
            let head = &series[(t + 1).saturating_sub(window)..=t];
            head.iter().sum::<f64>() / head.len() as f64
        })
        .collect()
}

/// One monitoring record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceSnapshot {
    #[serde(rename = "iter")]
    pub iteration: usize,
    pub losses: Vec<f64>,
    pub gds: f64,
    pub gms: f64,
    pub fd: f64,
    #[serde(rename = "weights")]
    pub applied_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Gds,
    Gms,
    Fd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Gds, Metric::Gms, Metric::Fd];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Gds => "gds",
            Metric::Gms => "gms",
            Metric::Fd => "fd",
        }
    }

    pub fn of(self, s: &InterferenceSnapshot) -> f64 {
        match self {
            Metric::Gds => s.gds,
            Metric::Gms => s.gms,
            Metric::Fd => s.fd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: String,
    pub level: GradientLevel,
    pub seed: u64,
    snapshots: Vec<InterferenceSnapshot>,
}

impl Trajectory {
    pub fn new(method: impl Into<String>, level: GradientLevel, seed: u64) -> Self {
        Trajectory {
            method: method.into(),
            level,
            seed,
            snapshots: Vec::new(),
        }
    }

    /// Appends a snapshot; iterations must be strictly increasing.
    pub fn push(&mut self, snapshot: InterferenceSnapshot) -> Result<()> {
        if let Some(last) = self.snapshots.last() {
            if snapshot.iteration <= last.iteration {
                return Err(Error::InvalidArgument(format!(
                    "snapshot iteration {} does not follow {}",
                    snapshot.iteration, last.iteration
                )));
            }
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn snapshots(&self) -> &[InterferenceSnapshot] {
        &self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn series(&self, metric: Metric) -> Vec<f64> {
        self.snapshots.iter().map(|s| metric.of(s)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// A tenth of the trajectory length.
    #[default]
    Default,
    Window(usize),
}

pub const DEFAULT_TAIL: usize = 50;

/// Mean of the last `tail` smoothed values of a metric.
pub fn trajectory_score(
    traj: &Trajectory,
    metric: Metric,
    tail: usize,
    smoothing: Smoothing,
) -> Result<f64> {
    series_score(&traj.series(metric), tail, smoothing)
}

/// [`trajectory_score`] on a bare series.
pub fn series_score(series: &[f64], tail: usize, smoothing: Smoothing) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if tail == 0 {
        return Err(Error::InvalidArgument("tail must be at least 1".into()));
    }
    let window = match smoothing {
        Smoothing::Default => default_window(series.len()),
        Smoothing::Window(w) => w,
    };
    let smoothed = moving_average(series, window);
    let last = &smoothed[smoothed.len() - tail.min(smoothed.len())..];
    Ok(last.iter().sum::<f64>() / last.len() as f64)
}

/// Items ordered by descending score, ties broken by label.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    items: Vec<String>,
    scores: Vec<f64>,
    order: Vec<usize>,
}

impl Ranking {
    pub fn new(items: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if items.len() != scores.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} scores",
                items.len(),
                scores.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("ranking scores"));
        }
        let mut sorted = items.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate ranking label".into()));
        }
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(Ordering::Equal)
                .then_with(|| items[a].cmp(&items[b]))
        });
        Ok(Ranking {
            items,
            scores,
            order,
        })
    }

    /// Ascending-score ranking (for metrics where lower is better).
    pub fn ascending(items: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        let negated = scores.iter().map(|s| -s).collect();
        let mut r = Ranking::new(items, negated)?;
        r.scores = scores;
        Ok(r)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Labels from first to last place.
    pub fn ordered_labels(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.items[i].as_str()).collect()
    }

    fn positions(&self) -> std::collections::BTreeMap<&str, usize> {
        self.order
            .iter()
            .enumerate()
            .map(|(place, &i)| (self.items[i].as_str(), place))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub raw: f64,
    /// `max(raw, 1 - raw)`.
    pub converted: f64,
}

/// Fraction of item pairs that two rankings put in the same order.
pub fn ranking_similarity(a: &Ranking, b: &Ranking) -> Result<Similarity> {
    let pa = a.positions();
    let pb = b.positions();
    if pa.len() != pb.len() || pa.keys().zip(pb.keys()).any(|(x, y)| x != y) {
        return Err(Error::ItemSetMismatch);
    }
    let n = pa.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two ranked items, got {n}"
        )));
    }
    let places: Vec<(usize, usize)> = pa.iter().map(|(k, &p)| (p, pb[k])).collect();
    let mut agree = 0usize;
    for (i, x) in places.iter().enumerate() {
        for (j, y) in places.iter().enumerate() {
            if i != j && (x.0 < y.0) == (x.1 < y.1) {
                agree += 1;
            }
        }
    }
    let raw = agree as f64 / (n * (n - 1)) as f64;
    Ok(Similarity {
        raw,
        converted: raw.max(1.0 - raw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads(columns: &[&[f64]], level: GradientLevel) -> TaskGradients {
        TaskGradients::from_columns(columns, level).unwrap()
    }

    fn param(columns: &[&[f64]]) -> TaskGradients {
        grads(columns, GradientLevel::Parameter)
    }

    #[test]
    fn gds_examples() {
        assert!((gds(&param(&[&[1.0, 2.0], &[1.0, 2.0]])) - 1.0).abs() < 1e-15);
        assert_eq!(gds(&param(&[&[1.0, 0.0], &[0.0, 1.0]])), 0.0);
        assert!(
            (gds(&param(&[&[1.0, 0.0], &[1.0, 1.0]])) - std::f64::consts::FRAC_1_SQRT_2).abs()
                < 1e-12
        );
        assert_eq!(gds(&param(&[&[0.0, 0.0], &[1.0, 1.0]])), 0.0);
    }

    #[test]
    fn gms_examples() {
        assert_eq!(gms(&param(&[&[3.0, 0.0], &[0.0, 3.0]])), 1.0);
        assert!((gms(&param(&[&[1.0, 0.0], &[0.0, 3.0]])) - 0.6).abs() < 1e-15);
        assert_eq!(gms(&param(&[&[1.0, 0.0], &[0.0, 0.0]])), 0.0);
        assert_eq!(gms(&param(&[&[0.0, 0.0], &[0.0, 0.0]])), 1.0);
    }

    #[test]
    fn fd_examples() {
        let feature = |c: &[&[f64]]| grads(c, GradientLevel::Feature);
        let one_hot = fd_entropy(&feature(&[&[1.0, 0.0, 2.0], &[0.0, -3.0, 0.0]])).unwrap();
        assert_eq!(one_hot.value, 0.0);
        let uniform = fd_entropy(&feature(&[&[1.0, 2.0], &[-1.0, 2.0], &[1.0, -2.0]])).unwrap();
        assert!((uniform.value - 3f64.ln()).abs() < 1e-12);
        let single = fd_entropy(&feature(&[&[0.75], &[0.25]])).unwrap();
        assert!((single.value - 0.56233).abs() < 1e-5);
        let empty = fd_entropy(&feature(&[&[0.0, 0.0], &[0.0, 0.0]])).unwrap();
        assert!(empty.degenerate && empty.value == 0.0);
        let partial = fd_entropy(&feature(&[&[0.0, 1.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(partial.included, 1);
        assert!((partial.value - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fd_rejects_parameter_level() {
        assert_eq!(
            fd_entropy(&param(&[&[1.0], &[1.0]])),
            Err(Error::WrongGradientLevel {
                expected: "feature-level"
            })
        );
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(
            moving_average(&[1.0, 2.0, 3.0, 4.0], 2),
            vec![1.0, 1.5, 2.5, 3.5]
        );
        assert_eq!(moving_average(&[5.0, -1.0, 2.0], 1), vec![5.0, -1.0, 2.0]);
        assert_eq!(moving_average(&[2.5; 30], 7), vec![2.5; 30]);
        assert_eq!(default_window(5), 1);
        assert_eq!(default_window(250), 25);
    }

    #[test]
    fn moving_average_matches_direct_window() {
        let series: Vec<f64> = (0..200)
            .map(|i| ((i * 37 % 11) as f64).sin() * 1e3)
            .collect();
        for w in [1, 3, 10, 17, 250] {
            let fast = moving_average(&series, w);
            for (t, v) in fast.iter().enumerate() {
                let start = (t + 1).saturating_sub(w);
                let direct = series[start..=t].iter().sum::<f64>() / (t + 1 - start) as f64;
                assert!((v - direct).abs() < 1e-9, "w={w} t={t}");
            }
        }
    }

    fn ramp(n: usize) -> Trajectory {
        let mut t = Trajectory::new("baseline", GradientLevel::Parameter, 0);
        for i in 1..=n {
            t.push(InterferenceSnapshot {
                iteration: i * 10,
                losses: vec![0.0, 0.0],
                gds: i as f64,
                gms: 0.5,
                fd: 0.0,
                applied_weights: None,
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn score_examples() {
        let t = ramp(100);
        assert_eq!(
            trajectory_score(&t, Metric::Gds, 50, Smoothing::Window(1)).unwrap(),
            75.5
        );
        assert_eq!(
            trajectory_score(&t, Metric::Gms, 50, Smoothing::Default).unwrap(),
            0.5
        );
        let short = ramp(4);
        assert_eq!(
            trajectory_score(&short, Metric::Gds, 50, Smoothing::Window(1)).unwrap(),
            2.5
        );
        let empty = Trajectory::new("x", GradientLevel::Parameter, 0);
        assert_eq!(
            trajectory_score(&empty, Metric::Gds, 50, Smoothing::Default),
            Err(Error::EmptyTrajectory)
        );
    }

    #[test]
    fn trajectory_rejects_out_of_order() {
        let mut t = ramp(2);
        let mut s = t.snapshots()[0].clone();
        s.iteration = 20;
        assert!(t.push(s).is_err());
    }

    fn ranking(labels: &[&str], scores: &[f64]) -> Ranking {
        Ranking::new(
            labels.iter().map(|s| s.to_string()).collect(),
            scores.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn similarity_examples() {
        let a = ranking(&["a", "b", "c"], &[3.0, 2.0, 1.0]);
        let same = ranking(&["c", "a", "b"], &[0.0, 9.0, 5.0]);
        let reversed = ranking(&["a", "b", "c"], &[1.0, 2.0, 3.0]);
        let swapped = ranking(&["a", "b", "c"], &[2.0, 3.0, 1.0]);
        assert_eq!(
            ranking_similarity(&a, &same).unwrap(),
            Similarity {
                raw: 1.0,
                converted: 1.0
            }
        );
        assert_eq!(
            ranking_similarity(&a, &reversed).unwrap(),
            Similarity {
                raw: 0.0,
                converted: 1.0
            }
        );
        let s = ranking_similarity(&a, &swapped).unwrap();
        assert!((s.raw - 2.0 / 3.0).abs() < 1e-15);
        let other = ranking(&["a", "b", "d"], &[1.0, 2.0, 3.0]);
        assert_eq!(ranking_similarity(&a, &other), Err(Error::ItemSetMismatch));
    }

    #[test]
    fn ties_break_by_label() {
        let r = ranking(&["b", "a", "c"], &[1.0, 1.0, 2.0]);
        assert_eq!(r.ordered_labels(), vec!["c", "a", "b"]);
        let asc = Ranking::ascending(vec!["x".into(), "y".into()], vec![2.0, 1.0]).unwrap();
        assert_eq!(asc.ordered_labels(), vec!["y", "x"]);
    }

    #[test]
    fn snapshot_json_keys() {
        let s = InterferenceSnapshot {
            iteration: 10,
            losses: vec![1.0, 0.5],
            gds: 0.25,
            gms: 0.75,
            fd: 0.1,
            applied_weights: Some(vec![0.5, 0.5]),
        };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"iter":10,"losses":[1.0,0.5],"gds":0.25,"gms":0.75,"fd":0.1,"weights":[0.5,0.5]}"#
        );
        assert_eq!(
            serde_json::from_str::<InterferenceSnapshot>(&json).unwrap(),
            s
        );
    }
}
