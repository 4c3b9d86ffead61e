use std::fs;
use std::path::Path;

use mtlab_core::monitors::{InterferenceSnapshot, Trajectory};

use crate::error::{HarnessError, Result};

/// Marker left in a directory whose outputs are incomplete.
pub const FAILED_MARKER: &str = "FAILED";

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    fs::write(tmp, contents).map_err(|e| HarnessError::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub fn trajectory_file_name(seed: u64) -> String {
    format!("seed-{seed}.jsonl")
}

/// One JSON object per snapshot, newline terminated.
pub fn trajectory_to_jsonl(trajectory: &Trajectory) -> String {
    let mut out = String::new();
    for s in trajectory.snapshots() {
        out.push_str(&serde_json::to_string(s).expect("snapshots always serialize"));
        out.push('\n');
    }
    out
}

/// Parses and checks a JSONL trajectory: iterations strictly increasing,
/// one loss per task throughout, metrics finite.
pub fn parse_trajectory(text: &str) -> Result<Vec<InterferenceSnapshot>> {
    let mut out: Vec<InterferenceSnapshot> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |detail: String| HarnessError::Parse {
            what: "trajectory",
            line: line_no,
            detail,
        };
        let s: InterferenceSnapshot =
            serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        if let Some(prev) = out.last() {
            if s.iteration <= prev.iteration {
                return Err(fail(format!(
                    "iteration {} after {}",
                    s.iteration, prev.iteration
                )));
            }
            if s.losses.len() != prev.losses.len() {
                return Err(fail("task count changed".into()));
            }
        }
        if s.losses.is_empty() {
            return Err(fail("no losses".into()));
        }
        let finite = [s.gds, s.gms, s.fd]
            .iter()
            .chain(&s.losses)
            .all(|v| v.is_finite());
        if !finite {
            return Err(fail("non-finite value".into()));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<InterferenceSnapshot>> {
    parse_trajectory(&read_to_string(path)?)
}
