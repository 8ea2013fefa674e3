//! Experiment reports: raw replicate rows, summary statistics and pass/fail
//! verdicts.
//!
//! Rows are the ground truth: every verdict is a pure function of the row
//! table (plus thresholds echoed in the verdict itself), so an external
//! script can recompute any pass/fail decision from the CSV alone. Row
//! values are written with Rust's shortest round-trip float formatting,
//! making the CSV byte-identical across runs and worker-thread counts.

use serde::Serialize;
use std::fmt::Write as _;

/// One named pass/fail decision.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    /// Stable identifier of the criterion being checked.
    pub criterion: String,
    pub passed: bool,
    /// The measured quantity the decision is based on.
    pub measured: f64,
    /// Human-readable acceptance region.
    pub threshold: String,
}

impl Verdict {
    pub fn new(criterion: &str, passed: bool, measured: f64, threshold: impl Into<String>) -> Self {
        Verdict {
            criterion: criterion.to_string(),
            passed,
            measured,
            threshold: threshold.into(),
        }
    }
}

/// Full outcome of a Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Experiment kind identifier (for example `"lan"` or `"chaos"`).
    pub experiment: String,
    /// Echo of the configuration the experiment ran under.
    pub config: serde_json::Value,
    /// Column names of the row table.
    pub columns: Vec<String>,
    /// One row per measurement; all values numeric.
    pub rows: Vec<Vec<f64>>,
    /// Aggregate statistics derived from the rows.
    pub summary: serde_json::Value,
    /// Pass/fail decisions, each recomputable from the rows.
    pub verdicts: Vec<Verdict>,
    /// Wall-clock duration of the run in seconds (not part of the
    /// deterministic row output).
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    /// True when every verdict passed (vacuously true without verdicts).
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// The failing verdict ids, if any.
    pub fn failed_criteria(&self) -> Vec<&str> {
        self.verdicts
            .iter()
            .filter(|v| !v.passed)
            .map(|v| v.criterion.as_str())
            .collect()
    }

    /// Renders the row table as CSV. Columns are plain identifiers and all
    /// cells are numbers, so no quoting is needed; floats use the shortest
    /// representation that parses back to the same value.
    pub fn rows_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Summary document with config echo, statistics, verdicts and timing.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": self.experiment,
            "config": self.config,
            "summary": self.summary,
            "verdicts": self.verdicts,
            "passed": self.passed(),
            "rows": self.rows.len(),
            "wall_clock_seconds": self.wall_clock_seconds,
        })
    }
}

/// Index of a named column.
///
/// # Panics
/// Panics if the column is missing — a programming error in the experiment
/// that produced the table.
pub(crate) fn col(columns: &[String], name: &str) -> usize {
    columns
        .iter()
        .position(|c| c == name)
        .unwrap_or_else(|| panic!("missing column {name}"))
}

/// Values of one column, optionally filtered by a predicate on the row.
pub(crate) fn column_values<'a>(
    columns: &[String],
    rows: &'a [Vec<f64>],
    name: &str,
    mut keep: impl FnMut(&[f64]) -> bool + 'a,
) -> Vec<f64> {
    let idx = col(columns, name);
    rows.iter()
        .filter(|r| keep(r))
        .map(|r| r[idx])
        .collect()
}
