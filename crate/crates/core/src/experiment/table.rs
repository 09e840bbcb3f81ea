use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::store::{EntryKind, ResultEntry};
use crate::corpus::TASK_NAMES;
use crate::train::RunStatus;

const MISSING: &str = "—";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub task: u8,
    pub name: String,
    /// Test % error of the selected run, if any.
    pub error: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub rows: Vec<TableRow>,
    pub present: usize,
    pub zero_error_tasks: usize,
    /// Mean over present tasks of the unrounded errors.
    pub mean_error: Option<f64>,
}

/// Picks, per task, the completed run or imported entry with the lowest
/// validation error (entries without one rank last; earlier entries win
/// ties) and reports its test error.
pub fn build_table(entries: &[ResultEntry], tasks: &[u8]) -> TableReport {
    let rows: Vec<TableRow> = tasks
        .iter()
        .map(|&task| {
            let mut best: Option<&ResultEntry> = None;
            for e in entries.iter().filter(|e| {
                e.task == task
                    && e.kind != EntryKind::Eval
                    && e.status == RunStatus::Completed
                    && e.test_err.is_some()
            }) {
                let key = |x: &ResultEntry| x.valid_err.unwrap_or(f64::INFINITY);
                if best.is_none_or(|b| key(e) < key(b)) {
                    best = Some(e);
                }
            }
            TableRow {
                task,
                name: crate::corpus::task_name(task).unwrap_or("").to_string(),
                error: best.and_then(|e| e.test_err),
                seed: best.and_then(|e| e.seed),
            }
        })
        .collect();
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.error).collect();
    TableReport {
        present: errors.len(),
        zero_error_tasks: errors.iter().filter(|&&e| e == 0.0).count(),
        mean_error: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        rows,
    }
}

pub fn all_tasks() -> Vec<u8> {
    (1..=TASK_NAMES.len() as u8).collect()
}

/// One-decimal display used for every % error.
pub fn format_error(e: f64) -> String {
    format!("{e:.1}")
}

impl TableReport {
    pub fn render_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len() + 4)
            .max()
            .unwrap_or(0)
            .max(22);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}", "Task", "% Error");
        let _ = writeln!(out, "{}", "-".repeat(width + 10));
        for r in &self.rows {
            let label = format!("{}: {}", r.task, r.name);
            let value = r
                .error
                .map(format_error)
                .unwrap_or_else(|| MISSING.to_string());
            let _ = writeln!(out, "{label:<width$}  {value:>8}");
        }
        let _ = writeln!(out, "{}", "-".repeat(width + 10));
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}",
            "Tasks with 0 % error", self.zero_error_tasks
        );
        let mean = self
            .mean_error
            .map(format_error)
            .unwrap_or_else(|| MISSING.to_string());
        let _ = writeln!(out, "{:<width$}  {:>8}", "Mean % Error", mean);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}
