mod common;

use relnet::corpus::{parse_task_file, TaskData};
use relnet::model::Checkpoint;
use relnet::train::{
    evaluate, lr_grid_search, select_best, train_task, Defaults, ModelConfig, RunRecord, RunStatus,
    TrainConfig,
};

fn synthetic_task(train: usize, valid: usize, test: usize, seed: u64) -> TaskData {
    let parse = |n, s| parse_task_file(&common::synthetic::task1_text(n, s).0).unwrap();
    TaskData::from_text(
        1,
        parse(train, seed),
        Some(parse(valid, seed + 1)),
        parse(test, seed + 2),
    )
    .unwrap()
}

fn small_model(dim: usize, slots: usize) -> ModelConfig {
    ModelConfig {
        dim,
        slots,
        ..ModelConfig::default()
    }
}

fn quick_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

/// Ten-epoch window means, for a smoothed monotonicity check.
fn window_means(xs: &[f64], w: usize) -> Vec<f64> {
    xs.chunks(w)
        .filter(|c| c.len() == w)
        .map(|c| c.iter().sum::<f64>() / w as f64)
        .collect()
}

#[test]
fn overfits_fifty_synthetic_questions() {
    let mut data = synthetic_task(50, 1, 1, 11);
    // Validating on the training set turns early stopping into
    // "stop at 100% training accuracy".
    data.valid = data.train.clone();
    let cfg = TrainConfig {
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let out = train_task(&data, &small_model(32, 10), &cfg, 0, &mut |_| {}).unwrap();
    let r = &out.record;
    assert_eq!(r.status, RunStatus::Completed);
    assert_eq!(r.valid_err, Some(0.0), "train errors: {:?}", r.valid_errors);
    assert!(r.train_losses.len() <= 200);
}

#[test]
fn overfit_loss_trends_down_and_ends_small() {
    let mut data = synthetic_task(50, 1, 1, 11);
    data.valid = data.train.clone();
    let cfg = TrainConfig {
        max_epochs: 200,
        early_stop: false,
        ..TrainConfig::default()
    };
    let out = train_task(&data, &small_model(32, 10), &cfg, 0, &mut |_| {}).unwrap();
    let losses = &out.record.train_losses;
    let windows = window_means(losses, 10);
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0] * 1.05 + 1e-6, "windows {windows:?}");
    }
    assert!(
        *losses.last().unwrap() < 0.01,
        "final loss {}",
        losses.last().unwrap()
    );
}

#[test]
fn same_seed_gives_identical_records() {
    let data = synthetic_task(24, 8, 8, 3);
    let cfg = quick_config(3);
    let mut log_a = Vec::new();
    let mut log_b = Vec::new();
    let a = train_task(&data, &small_model(6, 3), &cfg, 7, &mut |m| {
        log_a.push(serde_json::to_string(m).unwrap())
    })
    .unwrap();
    let b = train_task(&data, &small_model(6, 3), &cfg, 7, &mut |m| {
        log_b.push(serde_json::to_string(m).unwrap())
    })
    .unwrap();
    let strip = |r: &RunRecord| RunRecord {
        wall_time_secs: 0.0,
        ..r.clone()
    };
    assert_eq!(strip(&a.record), strip(&b.record));
    assert_eq!(log_a, log_b);
    assert_eq!(
        a.checkpoint.unwrap().to_json(),
        b.checkpoint.unwrap().to_json()
    );

    let c = train_task(&data, &small_model(6, 3), &cfg, 8, &mut |_| {}).unwrap();
    assert_ne!(strip(&a.record), strip(&c.record));
}

#[test]
fn metrics_lines_have_the_documented_fields() {
    let data = synthetic_task(10, 4, 4, 5);
    let mut lines = Vec::new();
    train_task(&data, &small_model(4, 2), &quick_config(2), 1, &mut |m| {
        lines.push(serde_json::to_value(m).unwrap())
    })
    .unwrap();
    assert_eq!(lines.len(), 2);
    for (i, l) in lines.iter().enumerate() {
        let obj = l.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            ["epoch", "lr", "seed", "task", "train_loss", "valid_err"]
        );
        assert_eq!(obj["epoch"], i + 1);
        let v = obj["valid_err"].as_f64().unwrap();
        assert!((0.0..=100.0).contains(&v));
    }
}

#[test]
fn checkpoint_round_trip_preserves_evaluation() {
    let data = synthetic_task(16, 8, 12, 9);
    let out = train_task(&data, &small_model(5, 3), &quick_config(2), 2, &mut |_| {}).unwrap();
    let ck = out.checkpoint.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    ck.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let before = evaluate(&ck.parameters().unwrap(), &ck.hyper, &data.test).unwrap();
    let after = evaluate(&loaded.parameters().unwrap(), &loaded.hyper, &data.test).unwrap();
    assert_eq!(before.to_bits(), after.to_bits());
    assert_eq!(out.record.test_err, Some(before));
}

#[test]
fn select_best_uses_first_minimum() {
    let rec = |v: f64| RunRecord {
        task: 1,
        seed: 0,
        learning_rate: 0.005,
        train_losses: vec![],
        valid_errors: vec![v],
        best_epoch: Some(1),
        valid_err: Some(v),
        test_err: Some(v),
        wall_time_secs: 0.0,
        status: RunStatus::Completed,
    };
    let records: Vec<RunRecord> = [1.0, 0.2, 0.5, 0.2, 0.9].into_iter().map(rec).collect();
    assert_eq!(select_best(&records).unwrap(), 1);
    assert_eq!(select_best(&records[2..3]).unwrap(), 0);
}

#[test]
fn seeded_micro_runs_select_reproducibly() {
    let data = synthetic_task(12, 6, 6, 21);
    let run = || {
        let records: Vec<RunRecord> = (0..5)
            .map(|s| {
                train_task(&data, &small_model(4, 2), &quick_config(2), s, &mut |_| {})
                    .unwrap()
                    .record
            })
            .collect();
        let i = select_best(&records).unwrap();
        (i, records[i].valid_err, records[i].test_err)
    };
    assert_eq!(run(), run());
}

#[test]
fn grid_search_emits_one_record_per_rate() {
    let data = synthetic_task(12, 6, 6, 4);
    let grid = Defaults::shipped().train.lr_grid;
    let (lr, outcomes) = lr_grid_search(
        &data,
        &small_model(4, 2),
        &quick_config(2),
        &grid,
        0,
        &mut |_| {},
    )
    .unwrap();
    assert_eq!(outcomes.len(), 3);
    assert!(grid.contains(&lr));
    for (o, rate) in outcomes.iter().zip(&grid) {
        assert_eq!(o.record.learning_rate, *rate);
    }
    let (only, _) = lr_grid_search(
        &data,
        &small_model(4, 2),
        &quick_config(1),
        &[0.001],
        0,
        &mut |_| {},
    )
    .unwrap();
    assert_eq!(only, 0.001);
    assert!(lr_grid_search(
        &data,
        &small_model(4, 2),
        &quick_config(1),
        &[],
        0,
        &mut |_| {}
    )
    .is_err());
}

#[test]
fn diverging_run_is_recorded_as_failed() {
    let data = synthetic_task(8, 4, 4, 2);
    let cfg = TrainConfig {
        learning_rate: 1e300,
        clip_norm: 1e300,
        ..quick_config(3)
    };
    let out = train_task(&data, &small_model(4, 2), &cfg, 0, &mut |_| {}).unwrap();
    assert!(
        matches!(out.record.status, RunStatus::Failed { .. }),
        "{:?}",
        out.record.status
    );
}
