use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mtlab_core::monitors::{
    ranking_similarity, series_score, Metric, Ranking, Similarity, Smoothing, DEFAULT_TAIL,
};

use crate::error::{HarnessError, Result};
use crate::io::{read_trajectory, write_atomic};
use crate::sweep::read_manifest;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";
pub const SCORES_CSV: &str = "scores.csv";

/// Per-cell indicator scores and final performance, averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellScores {
    pub cell: String,
    /// GDS, GMS and FD trajectory scores, in `Metric::ALL` order.
    pub indicators: [f64; 3],
    pub final_losses: Vec<f64>,
}

impl CellScores {
    pub fn total(&self) -> f64 {
        self.final_losses.iter().sum()
    }
}

/// Converted ranking similarity of every indicator against every
/// final-performance column (each task loss, then the total).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub cells: Vec<CellScores>,
    pub columns: Vec<String>,
    pub rows: Vec<(Metric, Vec<Similarity>)>,
}

/// Scores one cell from its trajectories alone: smoothed tail means of the
/// indicators and the last snapshot's losses, each averaged over seeds.
pub fn score_cell(cell: &str, dir: &Path) -> Result<CellScores> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed-") && n.ends_with(".jsonl"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(HarnessError::Config(format!(
            "cell {cell} has no trajectories"
        )));
    }
    let mut indicators = [0.0; 3];
    let mut final_losses: Vec<f64> = Vec::new();
    for path in &files {
        let snapshots = read_trajectory(path)?;
        let last = snapshots
            .last()
            .ok_or_else(|| HarnessError::Config(format!("{} is empty", path.display())))?;
        if final_losses.is_empty() {
            final_losses = vec![0.0; last.losses.len()];
        } else if final_losses.len() != last.losses.len() {
            return Err(HarnessError::Config(format!(
                "cell {cell} mixes task counts"
            )));
        }
        for (acc, v) in final_losses.iter_mut().zip(&last.losses) {
            *acc += v;
        }
        for (slot, metric) in indicators.iter_mut().zip(Metric::ALL) {
            let series: Vec<f64> = snapshots.iter().map(|s| metric.of(s)).collect();
            *slot += series_score(&series, DEFAULT_TAIL, Smoothing::Default)?;
        }
    }
    let n = files.len() as f64;
    indicators.iter_mut().for_each(|v| *v /= n);
    final_losses.iter_mut().for_each(|v| *v /= n);
    Ok(CellScores {
        cell: cell.to_string(),
        indicators,
        final_losses,
    })
}

/// Ranks cells by each indicator (descending) and by each performance column
/// (ascending loss) and compares the rankings pairwise.
pub fn build_report(cells: Vec<CellScores>) -> Result<ReportTable> {
    if cells.len() < 2 {
        return Err(HarnessError::TooFewCells(cells.len()));
    }
    let tasks = cells[0].final_losses.len();
    if cells.iter().any(|c| c.final_losses.len() != tasks) {
        return Err(HarnessError::Config(
            "cells disagree on the task count".into(),
        ));
    }
    let labels: Vec<String> = cells.iter().map(|c| c.cell.clone()).collect();
    let mut columns: Vec<String> = (1..=tasks).map(|i| format!("loss_{i}")).collect();
    columns.push("total".into());
    let performance: Vec<Ranking> = (0..=tasks)
        .map(|col| {
            let scores = cells
                .iter()
                .map(|c| {
                    if col < tasks {
                        c.final_losses[col]
                    } else {
                        c.total()
                    }
                })
                .collect();
            Ranking::ascending(labels.clone(), scores)
        })
        .collect::<std::result::Result<_, _>>()?;
    let mut rows = Vec::new();
    for (k, metric) in Metric::ALL.into_iter().enumerate() {
        let indicator = Ranking::new(
            labels.clone(),
            cells.iter().map(|c| c.indicators[k]).collect(),
        )?;
        let sims = performance
            .iter()
            .map(|p| ranking_similarity(&indicator, p))
            .collect::<std::result::Result<_, _>>()?;
        rows.push((metric, sims));
    }
    Ok(ReportTable {
        cells,
        columns,
        rows,
    })
}

impl ReportTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("indicator,{}\n", self.columns.join(","));
        for (metric, sims) in &self.rows {
            let values: Vec<String> = sims.iter().map(|s| format!("{:.4}", s.converted)).collect();
            let _ = writeln!(out, "{},{}", metric.name(), values.join(","));
        }
        out
    }

    pub fn scores_csv(&self) -> String {
        let tasks = self.columns.len() - 1;
        let mut out = String::from("cell,gds,gms,fd");
        for i in 1..=tasks {
            let _ = write!(out, ",loss_{i}");
        }
        out.push_str(",total\n");
        for c in &self.cells {
            let _ = write!(
                out,
                "{},{},{},{}",
                c.cell, c.indicators[0], c.indicators[1], c.indicators[2]
            );
            for v in &c.final_losses {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", c.total());
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "Ranking similarity over {} cells (converted to [0.5, 1.0])\n\n",
            self.cells.len()
        );
        let _ = write!(out, "{:<10}", "indicator");
        for c in &self.columns {
            let _ = write!(out, "{c:>9}");
        }
        out.push('\n');
        for (metric, sims) in &self.rows {
            let _ = write!(out, "{:<10}", metric.name().to_uppercase());
            for s in sims {
                let _ = write!(out, "{:>9.3}", s.converted);
            }
            out.push('\n');
        }
        out.push_str("\ncell scores (indicator tail means; final total loss)\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:<16} gds {:>8.4}  gms {:>7.4}  fd {:>7.4}  total {:.6e}",
                c.cell,
                c.indicators[0],
                c.indicators[1],
                c.indicators[2],
                c.total()
            );
        }
        out
    }
}

/// Reads a sweep directory, scores its completed cells and writes the
/// report files next to the manifest.
pub fn report(dir: &Path) -> Result<ReportTable> {
    let manifest = read_manifest(dir)?;
    let cells = manifest
        .iter()
        .filter(|e| e.is_ok())
        .map(|e| {
            let name = e.cell.name();
            score_cell(&name, &dir.join(&name))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = build_report(cells)?;
    write_atomic(&dir.join(REPORT_CSV), table.to_csv().as_bytes())?;
    write_atomic(&dir.join(SCORES_CSV), table.scores_csv().as_bytes())?;
    write_atomic(&dir.join(REPORT_TXT), table.to_text().as_bytes())?;
    Ok(table)
}
