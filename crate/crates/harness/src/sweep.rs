use std::fmt;
use std::path::Path;

use mtlab_core::toylab::ToyProblem;
use mtlab_core::{GradientLevel, Method};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{parse_method, HarnessError, Result};
use crate::io::{create_dir, write_atomic};
use crate::run::{run_in, CONFIG_FILE};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub method: Method,
    pub level: GradientLevel,
}

impl Cell {
    /// Directory name: the method, prefixed with `rep-` on feature-level input.
    pub fn name(&self) -> String {
        match self.level {
            GradientLevel::Parameter => self.method.name().to_string(),
            GradientLevel::Feature => format!("rep-{}", self.method.name()),
        }
    }
}

/// Applicable cells in method-major order. Methods that only emit loss
/// weights get a single parameter-level cell whatever levels were asked for.
pub fn plan_cells(methods: &[Method], levels: &[GradientLevel]) -> Vec<Cell> {
    let mut cells: Vec<Cell> = Vec::new();
    for &method in methods {
        for &level in levels {
            let level = if method.accepts_feature_level() {
                level
            } else {
                GradientLevel::Parameter
            };
            let cell = Cell { method, level };
            if !cells.contains(&cell) {
                cells.push(cell);
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    /// Completed; the count of combiner fallback steps over all seeds.
    Ok {
        fallback_steps: usize,
    },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub cell: Cell,
    pub status: CellStatus,
}

impl ManifestEntry {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, CellStatus::Ok { .. })
    }
}

impl fmt::Display for ManifestEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t",
            self.cell.name(),
            self.cell.method,
            self.cell.level
        )?;
        match &self.status {
            CellStatus::Ok { fallback_steps } => write!(f, "ok\tfallback_steps={fallback_steps}"),
            CellStatus::Failed(msg) => {
                let flat: String = msg
                    .chars()
                    .map(|c| if c == '\t' || c == '\n' { ' ' } else { c })
                    .collect();
                write!(f, "failed\t{flat}")
            }
        }
    }
}

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    let mut out = String::from("# cell\tmethod\tlevel\tstatus\tdetail\n");
    for e in entries {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |detail: String| HarnessError::Parse {
            what: "manifest",
            line: idx + 1,
            detail,
        };
        let fields: Vec<&str> = line.splitn(5, '\t').collect();
        if fields.len() != 5 {
            return Err(fail(format!(
                "expected 5 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let method = parse_method(fields[1]).map_err(|e| fail(e.to_string()))?;
        let level: GradientLevel = fields[2]
            .parse()
            .map_err(|_| fail(format!("bad level {:?}", fields[2])))?;
        let cell = Cell { method, level };
        if cell.name() != fields[0] {
            return Err(fail(format!(
                "cell name {:?} does not match {method} at {level}",
                fields[0]
            )));
        }
        let status = match fields[3] {
            "ok" => {
                let n = fields[4]
                    .strip_prefix("fallback_steps=")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| fail(format!("bad detail {:?}", fields[4])))?;
                CellStatus::Ok { fallback_steps: n }
            }
            "failed" => CellStatus::Failed(fields[4].to_string()),
            other => return Err(fail(format!("bad status {other:?}"))),
        };
        entries.push(ManifestEntry { cell, status });
    }
    Ok(entries)
}

/// Runs every applicable cell under `base.out/<cell>`. Cell failures are
/// recorded in the manifest and never stop the sweep. Output does not depend
/// on `jobs`.
pub fn sweep(
    base: &RunConfig,
    methods: &[Method],
    levels: &[GradientLevel],
    jobs: usize,
) -> Result<Vec<ManifestEntry>> {
    let cells = plan_cells(methods, levels);
    if cells.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let mut checked = base.clone();
    checked.method = Method::Baseline;
    checked.level = GradientLevel::Parameter;
    checked.validate()?;
    let problem = ToyProblem::new(base.problem.clone())?;
    let root = base.out.as_path();
    create_dir(root)?;
    write_atomic(&root.join(CONFIG_FILE), checked.to_stored_toml().as_bytes())?;

    let run_cell = |cell: &Cell| -> ManifestEntry {
        let mut config = base.clone();
        config.method = cell.method;
        config.level = cell.level;
        let dir = root.join(cell.name());
        config.out = dir.clone();
        let status = match run_in(&problem, &config, &dir) {
            Ok(outcome) => CellStatus::Ok {
                fallback_steps: outcome.fallback_steps(),
            },
            Err(e) => CellStatus::Failed(e.to_string()),
        };
        ManifestEntry {
            cell: *cell,
            status,
        }
    };
    let entries: Vec<ManifestEntry> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    } else {
        cells.iter().map(run_cell).collect()
    };
    write_atomic(
        &root.join(MANIFEST_FILE),
        format_manifest(&entries).as_bytes(),
    )?;
    Ok(entries)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    parse_manifest(&crate::io::read_to_string(&dir.join(MANIFEST_FILE))?)
}
