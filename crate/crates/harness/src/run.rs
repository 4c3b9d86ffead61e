use std::fs;
use std::path::{Path, PathBuf};

use mtlab_core::toylab::{train_run, ToyProblem};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::io::{
    create_dir, trajectory_file_name, trajectory_to_jsonl, write_atomic, FAILED_MARKER,
};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub final_losses: Vec<f64>,
    pub snapshots: usize,
    pub fallback_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub seeds: Vec<SeedResult>,
    /// Final losses averaged over seeds.
    pub mean_losses: Vec<f64>,
}

impl RunOutcome {
    pub fn fallback_steps(&self) -> usize {
        self.seeds.iter().map(|s| s.fallback_steps).sum()
    }
}

/// Builds the configured problem and runs every repeat seed into `config.out`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let problem = ToyProblem::new(config.problem.clone())?;
    run_in(&problem, config, &config.out)
}

/// Runs into `dir`, leaving a failure marker there if anything goes wrong.
pub fn run_in(problem: &ToyProblem, config: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    create_dir(dir)?;
    let marker = dir.join(FAILED_MARKER);
    let result = run_seeds(problem, config, dir);
    match &result {
        Ok(_) => {
            if marker.exists() {
                fs::remove_file(&marker).map_err(|e| HarnessError::io(&marker, e))?;
            }
        }
        Err(e) => {
            // Best effort: the original error matters more than the marker.
            let _ = write_atomic(&marker, format!("{e}\n").as_bytes());
        }
    }
    result
}

fn run_seeds(problem: &ToyProblem, config: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    write_atomic(&dir.join(CONFIG_FILE), config.to_stored_toml().as_bytes())?;

    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let out = train_run(
            problem,
            config.method,
            config.level,
            config.iters,
            seed,
            &config.train,
        )
        .map_err(|e| match e {
            mtlab_core::Error::DivergenceDetected { iteration } => {
                HarnessError::Divergence { seed, iteration }
            }
            other => other.into(),
        })?;
        write_atomic(
            &dir.join(trajectory_file_name(seed)),
            trajectory_to_jsonl(&out.trajectory).as_bytes(),
        )?;
        seeds.push(SeedResult {
            seed,
            final_losses: out.final_losses.into_inner(),
            snapshots: out.trajectory.len(),
            fallback_steps: out.fallback_steps,
        });
    }

    let t = problem.tasks();
    let mean_losses: Vec<f64> = (0..t)
        .map(|i| seeds.iter().map(|s| s.final_losses[i]).sum::<f64>() / seeds.len() as f64)
        .collect();
    write_atomic(&dir.join(SUMMARY_FILE), &summary_csv(&seeds, &mean_losses)?)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        seeds,
        mean_losses,
    })
}

fn summary_csv(seeds: &[SeedResult], mean: &[f64]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["seed".to_string()];
    header.extend((1..=mean.len()).map(|i| format!("loss_{i}")));
    header.extend(["total".to_string(), "fallback_steps".to_string()]);
    let csv_err = |e: csv::Error| HarnessError::Config(format!("summary encoding: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let row = |label: String, losses: &[f64], fallbacks: String| {
        let mut r = vec![label];
        r.extend(losses.iter().map(|v| v.to_string()));
        r.push(losses.iter().sum::<f64>().to_string());
        r.push(fallbacks);
        r
    };
    for s in seeds {
        w.write_record(row(
            s.seed.to_string(),
            &s.final_losses,
            s.fallback_steps.to_string(),
        ))
        .map_err(csv_err)?;
    }
    let total_fallbacks: usize = seeds.iter().map(|s| s.fallback_steps).sum();
    w.write_record(row("mean".into(), mean, total_fallbacks.to_string()))
        .map_err(csv_err)?;
    w.into_inner()
        .map_err(|e| HarnessError::Config(format!("summary encoding: {e}")))
}
