use std::collections::BTreeSet;
use std::path::PathBuf;

use mtlab_core::toylab::{ProblemSpec, TrainConfig};
use mtlab_core::{GradientLevel, Method};
use serde::{Deserialize, Serialize};

use crate::error::{parse_method, HarnessError, Result};

/// One experiment: a problem, a method at a gradient level, and the repeat
/// seeds. Stored as a flat TOML table; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: Method,
    pub level: GradientLevel,
    pub iters: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    #[serde(flatten)]
    pub problem: ProblemSpec,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Baseline,
            level: GradientLevel::Parameter,
            iters: 500,
            seeds: vec![0, 1, 2],
            out: PathBuf::from("mtlab-out"),
            problem: ProblemSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

fn known_keys() -> BTreeSet<String> {
    match toml::Table::try_from(RunConfig::default()) {
        Ok(table) => table.keys().cloned().collect(),
        Err(_) => BTreeSet::new(),
    }
}

/// Parses a flat TOML config. Unknown keys are rejected so that typos do not
/// silently fall back to defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    let known = known_keys();
    let unknown: Vec<&str> = table
        .keys()
        .filter(|k| !known.contains(*k))
        .map(|k| k.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(HarnessError::Config(format!(
            "unknown keys: {}",
            unknown.join(", ")
        )));
    }
    if let Some(toml::Value::String(name)) = table.get("method") {
        parse_method(name)?;
    }
    let config: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.seeds.is_empty() {
            return fail("at least one repeat seed is required".into());
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return fail("repeat seeds must be distinct".into());
        }
        if self.iters == 0 {
            return fail("iters must be at least 1".into());
        }
        if self.train.cadence == 0 {
            return fail("cadence must be at least 1".into());
        }
        if !self.train.lr.is_finite() || self.train.lr <= 0.0 {
            return fail(format!("lr must be positive, got {}", self.train.lr));
        }
        if self.level == GradientLevel::Feature && !self.method.accepts_feature_level() {
            return fail(format!(
                "{} runs on parameter-level gradients only",
                self.method
            ));
        }
        Ok(())
    }

    /// The resolved configuration, every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    /// The configuration as saved next to its results. The output location
    /// is left out so a result directory can be moved or compared byte for
    /// byte with a rerun elsewhere.
    pub fn to_stored_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("run configs always serialize");
        table.remove("out");
        toml::to_string(&table).expect("tables always serialize")
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<String>,
    pub level: Option<String>,
    pub iters: Option<usize>,
    pub seeds: Option<String>,
    pub out: Option<PathBuf>,
    pub cadence: Option<usize>,
    pub tasks: Option<usize>,
}

pub fn parse_seeds(csv: &str) -> Result<Vec<u64>> {
    csv.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| HarnessError::Config(format!("bad seed {s:?}")))
        })
        .collect()
}

pub fn parse_level(s: &str) -> Result<GradientLevel> {
    s.parse().map_err(|_| {
        HarnessError::Config(format!(
            "unknown gradient level {s:?}; expected param or feature"
        ))
    })
}

impl Overrides {
    pub fn apply(&self, mut config: RunConfig) -> Result<RunConfig> {
        if let Some(m) = &self.method {
            config.method = parse_method(m)?;
        }
        if let Some(l) = &self.level {
            config.level = parse_level(l)?;
        }
        if let Some(i) = self.iters {
            config.iters = i;
        }
        if let Some(s) = &self.seeds {
            config.seeds = parse_seeds(s)?;
        }
        if let Some(o) = &self.out {
            config.out = o.clone();
        }
        if let Some(c) = self.cadence {
            config.train.cadence = c;
        }
        if let Some(t) = self.tasks {
            config.problem.tasks = t;
        }
        config.validate()?;
        Ok(config)
    }
}
