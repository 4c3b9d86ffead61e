//! Experiment plumbing: configured runs, multi-seed sweeps over every
//! (method, gradient level) cell, and ranking-similarity reports.

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod run;
pub mod selftest;
pub mod sweep;

pub use config::{parse_config, Overrides, RunConfig};
pub use error::{HarnessError, Result};
pub use report::{report, ReportTable};
pub use run::{run, RunOutcome};
pub use sweep::{plan_cells, sweep, Cell, CellStatus, ManifestEntry};
