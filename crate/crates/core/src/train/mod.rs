//! Training protocol: minibatch Adam on softmax cross-entropy with global
//! gradient-norm clipping, per-epoch validation, and best-checkpoint
//! selection across seeds and learning rates.

mod config;
mod optim;

pub use config::{Defaults, ModelConfig, TaskOverride, TrainConfig};
pub use optim::{argmax, clip_global_norm, cross_entropy, global_norm, Adam};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{batchify, truncate, Example, TaskData};
use crate::model::{self, Checkpoint, HyperParams, ModelError, Parameters};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("gradient norm is not finite")]
    NonFiniteGradient,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),
    #[error("no run completed successfully")]
    NoCompletedRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { reason: String },
}

/// Outcome of one (task, seed, learning rate) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: u8,
    pub seed: u64,
    pub learning_rate: f64,
    pub train_losses: Vec<f64>,
    pub valid_errors: Vec<f64>,
    /// 1-based epoch of the selected checkpoint.
    pub best_epoch: Option<usize>,
    pub valid_err: Option<f64>,
    pub test_err: Option<f64>,
    pub wall_time_secs: f64,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// One metrics line, emitted after every epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub task: u8,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_err: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    /// Parameters from the epoch with the lowest validation error.
    pub checkpoint: Option<Checkpoint>,
}

/// Percentage of examples whose argmax prediction differs from the answer.
pub fn evaluate(
    params: &Parameters,
    hyper: &HyperParams,
    examples: &[Example],
) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let wrong = examples
        .par_iter()
        .map(|e| {
            model::forward(params, hyper, e)
                .map(|(logits, _)| usize::from(argmax(logits.data()) != e.answer))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum::<usize>();
    Ok(100.0 * wrong as f64 / examples.len() as f64)
}

/// Mean loss and mean gradients over a set of examples. Per-example work
/// runs in parallel; the reduction is sequential so results do not depend on
/// thread scheduling.
pub fn batch_gradients(
    params: &Parameters,
    hyper: &HyperParams,
    stories: &[Vec<Vec<usize>>],
    questions: &[Vec<usize>],
    answers: &[usize],
) -> Result<(f64, Vec<Tensor>), ModelError> {
    let n = answers.len();
    let per: Vec<(f64, Vec<Tensor>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            model::loss_and_gradients(params, hyper, &stories[i], &questions[i], answers[i])
                .map(|(l, g, _)| (l, g))
        })
        .collect::<Result<_, _>>()?;
    let mut grads: Vec<Tensor> = params
        .tensors()
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    let mut loss = 0.0;
    for (l, g) in per {
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(&g) {
            acc.add_assign(gi);
        }
    }
    let scale = 1.0 / n.max(1) as f64;
    for g in &mut grads {
        g.scale_in_place(scale);
    }
    Ok((loss * scale, grads))
}

/// Trains one model from scratch on `data` and reports the run.
///
/// A non-finite loss or gradient ends the run with [`RunStatus::Failed`];
/// the best checkpoint seen before the failure is still returned.
pub fn train_task(
    data: &TaskData,
    model_cfg: &ModelConfig,
    config: &TrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<RunOutcome, TrainError> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    let start = Instant::now();
    let hyper = model_cfg.hyper_for(data);
    hyper.validate()?;
    let cut = |xs: &[Example]| {
        xs.iter()
            .map(|e| truncate(e, config.truncation))
            .collect::<Vec<_>>()
    };
    let (train, valid, test) = (cut(&data.train), cut(&data.valid), cut(&data.test));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Parameters::init(&hyper, &mut rng)?;
    let mut adam = Adam::new(config, params.tensors());

    let mut record = RunRecord {
        task: data.task,
        seed,
        learning_rate: config.learning_rate,
        train_losses: Vec::new(),
        valid_errors: Vec::new(),
        best_epoch: None,
        valid_err: None,
        test_err: None,
        wall_time_secs: 0.0,
        status: RunStatus::Completed,
    };
    let mut best: Option<Parameters> = None;

    'epochs: for epoch in 1..=config.max_epochs {
        let shuffle_seed: u64 = rng.random();
        let mut total = 0.0;
        for batch in batchify(&train, config.batch_size, shuffle_seed) {
            let (loss, mut grads) = batch_gradients(
                &params,
                &hyper,
                &batch.stories,
                &batch.questions,
                &batch.answers,
            )?;
            if !loss.is_finite() {
                record.status = RunStatus::Failed {
                    reason: format!("non-finite loss in epoch {epoch}"),
                };
                break 'epochs;
            }
            if clip_global_norm(&mut grads, config.clip_norm).is_err() {
                record.status = RunStatus::Failed {
                    reason: format!("non-finite gradient in epoch {epoch}"),
                };
                break 'epochs;
            }
            adam.step(params.tensors_mut(), &grads);
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let valid_err = evaluate(&params, &hyper, &valid)?;
        record.train_losses.push(train_loss);
        record.valid_errors.push(valid_err);
        on_epoch(&EpochMetrics {
            task: data.task,
            seed,
            epoch,
            train_loss,
            valid_err,
            lr: config.learning_rate,
        });
        if record.valid_err.is_none_or(|b| valid_err < b) {
            record.valid_err = Some(valid_err);
            record.best_epoch = Some(epoch);
            best = Some(params.clone());
        }
        if config.early_stop && valid_err == 0.0 {
            break;
        }
    }

    let checkpoint = match &best {
        Some(p) => {
            record.test_err = Some(evaluate(p, &hyper, &test)?);
            Some(Checkpoint::new(
                &hyper,
                p,
                data.vocab.tokens(),
                Some(data.task),
            ))
        }
        None => None,
    };
    record.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(RunOutcome { record, checkpoint })
}

/// Index of the completed run with the lowest validation error; the
/// earliest run wins ties.
pub fn select_best(records: &[RunRecord]) -> Result<usize, TrainError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in records.iter().enumerate() {
        let Some(v) = r.valid_err.filter(|_| r.is_completed()) else {
            continue;
        };
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).ok_or(TrainError::NoCompletedRuns)
}

/// Trains once per learning rate and returns the rate whose run has the
/// lowest validation error, with every run's outcome in grid order.
pub fn lr_grid_search(
    data: &TaskData,
    model_cfg: &ModelConfig,
    config: &TrainConfig,
    grid: &[f64],
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<(f64, Vec<RunOutcome>), TrainError> {
    if grid.is_empty() {
        return Err(TrainError::InvalidConfig(
            "learning-rate grid is empty".into(),
        ));
    }
    let mut outcomes = Vec::with_capacity(grid.len());
    for &lr in grid {
        let cfg = TrainConfig {
            learning_rate: lr,
            ..config.clone()
        };
        outcomes.push(train_task(data, model_cfg, &cfg, seed, on_epoch)?);
    }
    let records: Vec<RunRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let i = select_best(&records)?;
    Ok((grid[i], outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(valid: Option<f64>, status: RunStatus) -> RunRecord {
        RunRecord {
            task: 1,
            seed: 0,
            learning_rate: 0.005,
            train_losses: vec![],
            valid_errors: vec![],
            best_epoch: None,
            valid_err: valid,
            test_err: None,
            wall_time_secs: 0.0,
            status,
        }
    }

    #[test]
    fn select_best_prefers_first_minimum() {
        let rs = vec![
            record(Some(3.0), RunStatus::Completed),
            record(Some(1.0), RunStatus::Completed),
            record(Some(1.0), RunStatus::Completed),
            record(
                Some(0.5),
                RunStatus::Failed {
                    reason: "nan".into(),
                },
            ),
        ];
        assert_eq!(select_best(&rs).unwrap(), 1);
    }

    #[test]
    fn select_best_needs_a_completed_run() {
        let rs = vec![record(
            None,
            RunStatus::Failed {
                reason: "nan".into(),
            },
        )];
        assert!(matches!(select_best(&rs), Err(TrainError::NoCompletedRuns)));
        assert!(select_best(&[]).is_err());
    }

    #[test]
    fn run_record_serializes_status() {
        let r = record(Some(1.0), RunStatus::Failed { reason: "x".into() });
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"state\":\"failed\""));
        let back: RunRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
