use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::train::{RunRecord, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    /// Final errors of one training run.
    Run,
    /// A standalone evaluation of a checkpoint.
    Eval,
    /// A result supplied from elsewhere, e.g. a published table.
    Imported,
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub kind: EntryKind,
    pub task: u8,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub split: Option<String>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub valid_err: Option<f64>,
    #[serde(default)]
    pub test_err: Option<f64>,
    #[serde(default)]
    pub best_epoch: Option<usize>,
    #[serde(default)]
    pub wall_time_secs: Option<f64>,
    #[serde(default = "completed")]
    pub status: RunStatus,
    #[serde(default)]
    pub checkpoint: Option<String>,
}

fn completed() -> RunStatus {
    RunStatus::Completed
}

impl ResultEntry {
    pub fn from_run(record: &RunRecord, checkpoint: Option<&Path>) -> Self {
        Self {
            kind: EntryKind::Run,
            task: record.task,
            seed: Some(record.seed),
            split: None,
            learning_rate: Some(record.learning_rate),
            valid_err: record.valid_err,
            test_err: record.test_err,
            best_epoch: record.best_epoch,
            wall_time_secs: Some(record.wall_time_secs),
            status: record.status.clone(),
            checkpoint: checkpoint.map(|p| p.display().to_string()),
        }
    }

    pub fn imported(task: u8, test_err: f64) -> Self {
        Self {
            kind: EntryKind::Imported,
            task,
            seed: None,
            split: Some("test".into()),
            learning_rate: None,
            valid_err: None,
            test_err: Some(test_err),
            best_epoch: None,
            wall_time_secs: None,
            status: RunStatus::Completed,
            checkpoint: None,
        }
    }
}

/// Append-only JSON-lines store. Later lines for the same
/// (kind, task, seed) supersede earlier ones.
#[derive(Debug, Clone)]
pub struct ResultsStore {
    path: PathBuf,
}

impl ResultsStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes the entry as one line with a single `write` call.
    pub fn append(&self, entry: &ResultEntry) -> Result<(), CliError> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CliError::io(&self.path, e))?;
        f.write_all(line.as_bytes())
            .map_err(|e| CliError::io(&self.path, e))
    }

    pub fn entries(&self) -> Result<Vec<ResultEntry>, CliError> {
        let text = fs::read_to_string(&self.path).map_err(|e| CliError::io(&self.path, e))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| CliError::Data(format!("{}:{}: {e}", self.path.display(), i + 1)))
            })
            .collect()
    }

    /// Entries with duplicates resolved, in order of first appearance.
    pub fn latest(&self) -> Result<Vec<ResultEntry>, CliError> {
        Ok(dedup_latest(self.entries()?))
    }
}

pub fn dedup_latest(entries: Vec<ResultEntry>) -> Vec<ResultEntry> {
    let mut order: Vec<(EntryKind, u8, Option<u64>, Option<String>)> = Vec::new();
    let mut by_key = BTreeMap::new();
    for e in entries {
        let key = (
            e.kind,
            e.task,
            e.seed,
            e.checkpoint.clone().filter(|_| e.kind == EntryKind::Eval),
        );
        if by_key.insert(key.clone(), e).is_none() {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|k| by_key.remove(&k).expect("key present"))
        .collect()
}
