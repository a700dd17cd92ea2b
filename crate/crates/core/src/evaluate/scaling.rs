//! Formats pretraining-dataset scaling runs into per-task series.
//!
//! Combo labels are `+`-joined dataset codes from the alphabet `B V F S T`.
//! Rows are ordered by combo size, then by alphabet position of the codes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_CODES: [char; 5] = ['B', 'V', 'F', 'S', 'T'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRun {
    pub combo: String,
    pub task: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub combo: String,
    pub value: f64,
    /// Change from the previous row; `None` on the first row.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub tasks: BTreeMap<String, Vec<ScalingRow>>,
}

/// Parses a combo label into sorted alphabet positions. Whitespace around
/// codes is ignored.
pub fn parse_combo(label: &str) -> Result<Vec<usize>> {
    let mut codes = Vec::new();
    for part in label.split('+') {
        let part = part.trim();
        let mut chars = part.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return Err(Error::Validation(format!("bad dataset code {part:?} in combo {label:?}")));
        };
        let Some(pos) = DATASET_CODES.iter().position(|&d| d == c.to_ascii_uppercase()) else {
            return Err(Error::Validation(format!("unknown dataset code {c:?} in combo {label:?}")));
        };
        if codes.contains(&pos) {
            return Err(Error::Validation(format!("dataset {c:?} repeated in combo {label:?}")));
        }
        codes.push(pos);
    }
    codes.sort_unstable();
    Ok(codes)
}

fn canonical(codes: &[usize]) -> String {
    codes
        .iter()
        .map(|&i| DATASET_CODES[i].to_string())
        .collect::<Vec<_>>()
        .join("+")
}

pub fn scaling_report(runs: &[ScalingRun]) -> Result<ScalingReport> {
    let mut by_task: BTreeMap<String, Vec<(Vec<usize>, f64)>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for run in runs {
        let codes = parse_combo(&run.combo)?;
        if !run.value.is_finite() {
            return Err(Error::Validation(format!("non-finite value for {} / {}", run.combo, run.task)));
        }
        if !seen.insert((codes.clone(), run.task.clone())) {
            return Err(Error::Validation(format!(
                "duplicate entry for combo {} and task {}",
                canonical(&codes),
                run.task
            )));
        }
        by_task.entry(run.task.clone()).or_default().push((codes, run.value));
    }
    let tasks = by_task
        .into_iter()
        .map(|(task, mut rows)| {
            rows.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
            let mut prev: Option<f64> = None;
            let rows = rows
                .into_iter()
                .map(|(codes, value)| {
                    let row = ScalingRow { combo: canonical(&codes), value, delta: prev.map(|p| value - p) };
                    prev = Some(value);
                    row
                })
                .collect();
            (task, rows)
        })
        .collect();
    Ok(ScalingReport { tasks })
}

impl ScalingReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .tasks
            .values()
            .flatten()
            .map(|r| r.combo.len())
            .chain(std::iter::once(5))
            .max()
            .unwrap_or(5);
        for (task, rows) in &self.tasks {
            let _ = writeln!(out, "task: {task}");
            let _ = writeln!(out, "{:<width$}  {:>10}  {:>10}", "combo", "value", "delta");
            for r in rows {
                let delta = r.delta.map(|d| format!("{d:+.4}")).unwrap_or_default();
                let _ = writeln!(out, "{:<width$}  {:>10.4}  {:>10}", r.combo, r.value, delta);
            }
        }
        out
    }
}
