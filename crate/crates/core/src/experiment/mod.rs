//! Orchestration behind the `relnet` command line: dataset preparation,
//! multi-seed training, evaluation, result tables, and trace export.

mod store;
mod table;

pub use store::{dedup_latest, EntryKind, ResultEntry, ResultsStore};
pub use table::{all_tasks, build_table, format_error, TableReport, TableRow};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, truncate, write_cache, CorpusError, TaskData};
use crate::model::{self, Checkpoint, ModelError};
use crate::train::{self, Defaults, ModelConfig, TrainConfig, TrainError};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "best.ckpt.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Training(String),
}

impl CliError {
    /// Process exit code: 1 usage/config, 2 data, 3 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Training(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(m) => CliError::Usage(m),
            TrainError::EmptySplit(_) => CliError::Data(e.to_string()),
            other => CliError::Training(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidHyper(m) => CliError::Usage(m),
            ModelError::Io { .. } | ModelError::Checkpoint(_) | ModelError::ParamShape { .. } => {
                CliError::Data(e.to_string())
            }
            other => CliError::Training(other.to_string()),
        }
    }
}

/// Parses `1,3,5-7` into sorted, deduplicated task ids in 1..=20.
pub fn parse_tasks(spec: &str) -> Result<Vec<u8>, CliError> {
    let bad = || {
        CliError::Usage(format!(
            "invalid task list `{spec}`; expected ids in 1..=20 such as `1,3,5-7`"
        ))
    };
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (
                a.trim().parse::<u8>().map_err(|_| bad())?,
                b.trim().parse::<u8>().map_err(|_| bad())?,
            ),
            None => {
                let v = part.parse::<u8>().map_err(|_| bad())?;
                (v, v)
            }
        };
        if lo < 1 || hi > 20 || lo > hi {
            return Err(bad());
        }
        out.extend(lo..=hi);
    }
    if out.is_empty() {
        return Err(bad());
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Command-line overrides applied on top of the shipped defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub seeds: Option<usize>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub dim: Option<usize>,
    pub slots: Option<usize>,
    pub normalize_relations: bool,
    /// Disables early stopping.
    pub strict: bool,
    /// Use only the first N training questions.
    pub train_limit: Option<usize>,
    /// Search the learning-rate grid before the seeded runs.
    pub lr_grid: bool,
}

/// Everything needed to reproduce the runs for one task, given the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: u8,
    pub data_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub train_limit: Option<usize>,
    pub lr_grid: Option<Vec<f64>>,
    pub train: TrainConfig,
    pub model: ModelConfig,
}

impl ExperimentConfig {
    pub fn resolve(
        defaults: &Defaults,
        task: u8,
        data_dir: &Path,
        o: &Overrides,
    ) -> Result<Self, CliError> {
        let mut train = defaults.train_config(task);
        let mut model = defaults.model.clone();
        if let Some(v) = o.learning_rate {
            train.learning_rate = v;
        }
        if let Some(v) = o.epochs {
            train.max_epochs = v;
        }
        if let Some(v) = o.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = o.seeds {
            train.seeds_per_task = v;
        }
        if o.strict {
            train.early_stop = false;
        }
        if let Some(v) = o.dim {
            model.dim = v;
        }
        if let Some(v) = o.slots {
            model.slots = v;
        }
        model.normalize_relations |= o.normalize_relations;
        train.validate()?;
        if train.seeds_per_task < 1 {
            return Err(CliError::Usage("at least one seed is required".into()));
        }
        if model.dim < 1 || model.slots < 1 {
            return Err(CliError::Usage(
                "dimension and slot count must be at least 1".into(),
            ));
        }
        Ok(Self {
            task,
            data_dir: data_dir.to_path_buf(),
            seeds: (0..train.seeds_per_task as u64).collect(),
            train_limit: o.train_limit,
            lr_grid: o.lr_grid.then(|| train.lr_grid.clone()),
            train,
            model,
        })
    }
}

fn check_data_dir(dir: &Path) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "data directory {} does not exist",
            dir.display()
        )))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn task_dir(out_dir: &Path, task: u8) -> PathBuf {
    out_dir.join(format!("task{task}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedTask {
    pub task: u8,
    pub vocab_size: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub cache: PathBuf,
}

/// Parses each task and writes an encoded cache per task to `out_dir`.
pub fn cmd_prepare(
    data_dir: &Path,
    tasks: &[u8],
    out_dir: &Path,
) -> Result<Vec<PreparedTask>, CliError> {
    check_data_dir(data_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    tasks
        .iter()
        .map(|&task| {
            let data = corpus::load_task(data_dir, task)?;
            let cache = out_dir.join(format!("qa{task}.cache.json"));
            let all: Vec<_> = data
                .train
                .iter()
                .chain(&data.valid)
                .chain(&data.test)
                .cloned()
                .collect();
            write_cache(&cache, &data.vocab, &all)?;
            Ok(PreparedTask {
                task,
                vocab_size: data.vocab.len(),
                train: data.train.len(),
                valid: data.valid.len(),
                test: data.test.len(),
                cache,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TaskSummary {
    pub task: u8,
    pub records: Vec<train::RunRecord>,
    pub selected: Option<usize>,
    pub checkpoint: Option<PathBuf>,
}

/// Runs every seed for each task, writing per task directory the effective
/// configuration, the per-epoch metrics log, and the checkpoint of the run
/// with the best validation error. One result line per run is appended to
/// `out_dir/results.jsonl`. A task whose runs all fail is reported as a
/// training error after the remaining tasks finish.
pub fn cmd_train(
    data_dir: &Path,
    tasks: &[u8],
    out_dir: &Path,
    overrides: &Overrides,
    defaults: &Defaults,
) -> Result<Vec<TaskSummary>, CliError> {
    check_data_dir(data_dir)?;
    let configs = tasks
        .iter()
        .map(|&t| ExperimentConfig::resolve(defaults, t, data_dir, overrides))
        .collect::<Result<Vec<_>, _>>()?;
    let store = ResultsStore::new(out_dir.join(RESULTS_FILE));
    let mut summaries = Vec::new();
    let mut failed = Vec::new();
    for mut cfg in configs {
        let task = cfg.task;
        let mut data = corpus::load_task(data_dir, task)?;
        if let Some(n) = cfg.train_limit {
            data.train.truncate(n);
        }
        let dir = task_dir(out_dir, task);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let metrics_path = dir.join(METRICS_FILE);
        let mut metrics = String::new();
        let mut log = |m: &train::EpochMetrics| {
            metrics.push_str(&serde_json::to_string(m).expect("metrics serialize"));
            metrics.push('\n');
            eprintln!(
                "task {} seed {} epoch {} loss {:.6} valid {:.1}",
                m.task, m.seed, m.epoch, m.train_loss, m.valid_err
            );
        };

        if let Some(grid) = cfg.lr_grid.clone() {
            let (lr, _) = train::lr_grid_search(
                &data,
                &cfg.model,
                &cfg.train,
                &grid,
                cfg.seeds[0],
                &mut log,
            )?;
            cfg.train.learning_rate = lr;
        }
        write_file(
            &dir.join(EFFECTIVE_CONFIG_FILE),
            &serde_json::to_string_pretty(&cfg).expect("config serializes"),
        )?;

        let ckpt_path = dir.join(CHECKPOINT_FILE);
        let mut records = Vec::new();
        let mut checkpoints = Vec::new();
        for &seed in &cfg.seeds {
            let outcome = train::train_task(&data, &cfg.model, &cfg.train, seed, &mut log)?;
            records.push(outcome.record);
            checkpoints.push(outcome.checkpoint);
        }
        write_file(&metrics_path, &metrics)?;

        let selected = train::select_best(&records).ok();
        let mut saved = None;
        if let Some(i) = selected {
            if let Some(ck) = &checkpoints[i] {
                ck.save(&ckpt_path)?;
                saved = Some(ckpt_path.clone());
            }
        } else {
            failed.push(task);
        }
        for (i, r) in records.iter().enumerate() {
            let path = (Some(i) == selected)
                .then_some(ckpt_path.as_path())
                .filter(|_| saved.is_some());
            store.append(&ResultEntry::from_run(r, path))?;
        }
        summaries.push(TaskSummary {
            task,
            records,
            selected,
            checkpoint: saved,
        });
    }
    if failed.is_empty() {
        Ok(summaries)
    } else {
        Err(CliError::Training(format!(
            "every run failed for task(s) {failed:?}"
        )))
    }
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, model::Parameters), CliError> {
    let ck = Checkpoint::load(path)?;
    let params = ck.parameters()?;
    Ok((ck, params))
}

/// Loads the checkpoint's task from `data_dir` and checks the vocabulary
/// matches the one the checkpoint was trained with.
fn checkpoint_task(
    ck: &Checkpoint,
    data_dir: &Path,
    task: Option<u8>,
) -> Result<TaskData, CliError> {
    check_data_dir(data_dir)?;
    let task = task
        .or(ck.task)
        .ok_or_else(|| CliError::Usage("checkpoint has no task id; pass --task".into()))?;
    let data = corpus::load_task(data_dir, task)?;
    if data.vocab.tokens() != ck.vocab.as_slice() || data.vocab.len() != ck.hyper.vocab_size {
        return Err(CliError::Data(format!(
            "checkpoint vocabulary ({} tokens) does not match task {task} vocabulary ({} tokens)",
            ck.hyper.vocab_size,
            data.vocab.len()
        )));
    }
    Ok(data)
}

fn split<'a>(data: &'a TaskData, name: &str) -> Result<&'a [corpus::Example], CliError> {
    data.split(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown split `{name}`; expected train, valid or test"
        ))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: u8,
    pub split: String,
    pub error: f64,
}

impl EvalReport {
    pub fn line(&self) -> String {
        format!(
            "task {} {} {}",
            self.task,
            self.split,
            format_error(self.error)
        )
    }
}

/// Evaluates a checkpoint on one split and appends the result to the store.
pub fn cmd_eval(
    checkpoint: &Path,
    data_dir: &Path,
    split_name: &str,
    task: Option<u8>,
    store: Option<&ResultsStore>,
    defaults: &Defaults,
) -> Result<EvalReport, CliError> {
    let (ck, params) = load_checkpoint(checkpoint)?;
    let data = checkpoint_task(&ck, data_dir, task)?;
    let examples = split(&data, split_name)?;
    if examples.is_empty() {
        return Err(CliError::Data(format!("split `{split_name}` is empty")));
    }
    let limit = defaults.train_config(data.task).truncation;
    let examples: Vec<_> = examples.iter().map(|e| truncate(e, limit)).collect();
    let error = train::evaluate(&params, &ck.hyper, &examples)?;
    if let Some(store) = store {
        store.append(&ResultEntry {
            kind: EntryKind::Eval,
            task: data.task,
            seed: None,
            split: Some(split_name.to_string()),
            learning_rate: None,
            valid_err: (split_name == "valid").then_some(error),
            test_err: (split_name == "test").then_some(error),
            best_epoch: None,
            wall_time_secs: None,
            status: train::RunStatus::Completed,
            checkpoint: Some(checkpoint.display().to_string()),
        })?;
    }
    Ok(EvalReport {
        task: data.task,
        split: split_name.to_string(),
        error,
    })
}

pub fn cmd_table(store: &ResultsStore, tasks: &[u8]) -> Result<TableReport, CliError> {
    let entries = store.latest()?;
    if entries.is_empty() {
        return Err(CliError::Data(format!(
            "results store {} is empty",
            store.path().display()
        )));
    }
    Ok(build_table(&entries, tasks))
}

/// Runs one example through a checkpoint and writes its trace as JSON, plus
/// a DOT graph of the `top_k` most attended slot pairs if requested.
#[allow(clippy::too_many_arguments)]
pub fn cmd_trace(
    checkpoint: &Path,
    data_dir: &Path,
    split_name: &str,
    index: usize,
    task: Option<u8>,
    out: &Path,
    dot: Option<&Path>,
    top_k: usize,
    defaults: &Defaults,
) -> Result<model::ForwardTrace, CliError> {
    let (ck, params) = load_checkpoint(checkpoint)?;
    let data = checkpoint_task(&ck, data_dir, task)?;
    let examples = split(&data, split_name)?;
    let example = examples.get(index).ok_or_else(|| {
        CliError::Usage(format!(
            "example index {index} out of range for split `{split_name}` with {} examples",
            examples.len()
        ))
    })?;
    let example = truncate(example, defaults.train_config(data.task).truncation);
    let (_, trace) = model::forward(&params, &ck.hyper, &example)?;
    write_file(
        out,
        &serde_json::to_string_pretty(&trace).expect("trace serializes"),
    )?;
    if let Some(dot) = dot {
        write_file(dot, &trace.to_dot(top_k))?;
    }
    Ok(trace)
}
