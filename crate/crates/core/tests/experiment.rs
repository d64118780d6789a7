//! The experiment protocol through files: config in, report and CSVs out.

use std::fs;

use dual_core::baselines::Strategy;
use dual_core::data::{make_blobs, random_centers, write_csv, zscore_apply, zscore_fit_transform};
use dual_core::eval::{evaluate, svm_train};
use dual_core::experiment::{emit_outputs, run_experiment, ExperimentConfig, ExperimentReport};
use serde_json::{json, Value};

fn write_blobs(dir: &std::path::Path) {
    let centers = random_centers(3, 4, 3.0, 12);
    let ds = make_blobs(&[16, 16, 16], &centers, 1.0, 13).unwrap();
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).unwrap();
    fs::write(dir.join("blobs.csv"), buf).unwrap();
}

fn config(dir: &std::path::Path, body: Value) -> ExperimentConfig {
    let path = dir.join("config.json");
    fs::write(&path, body.to_string()).unwrap();
    ExperimentConfig::from_json_file(&path).unwrap()
}

fn small_train() -> Value {
    json!({ "k_clusters": 3, "hidden_widths": [12, 6], "pretrain_epochs": 30, "joint_epochs": 30 })
}

#[test]
fn report_round_trips_and_means_recompute() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let cfg = config(
        dir.path(),
        json!({
            "dataset": { "path": "blobs.csv" },
            "strategies": ["dual", "random", "kmeans"],
            "budgets": [4, 8],
            "repeats": 3,
            "seed": 5,
            "train": small_train()
        }),
    );
    let report = run_experiment(&cfg).unwrap();
    let out = dir.path().join("out");
    emit_outputs(&report, &out).unwrap();

    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let parsed: ExperimentReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.cells, report.cells);
    assert_eq!(parsed.cells.len(), 3 * 2 * 3);

    for s in &parsed.summary {
        let acc: Vec<f64> = parsed
            .cells
            .iter()
            .filter(|c| c.strategy == s.strategy && c.budget == s.budget)
            .map(|c| c.metrics.accuracy)
            .collect();
        assert_eq!(acc.len(), 3);
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        assert!((mean - s.mean_accuracy).abs() <= 1e-12);
        let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= s.mean_accuracy && s.mean_accuracy <= hi);
    }

    // selections are subsets of their repeat's candidate pool
    for cell in &parsed.cells {
        let split = &parsed.splits[cell.repeat];
        assert_eq!(cell.selected.len(), cell.budget);
        assert!(cell.selected.iter().all(|i| split.candidate_indices.binary_search(i).is_ok()));
        let file = out.join(format!("selections/{}_m{}_r{}.csv", cell.strategy, cell.budget, cell.repeat));
        let listed: Vec<usize> = fs::read_to_string(file)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(listed, cell.selected);
    }

    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "strategy,m,mean_acc,std_acc,mean_auc,std_auc");
    assert_eq!(curves.lines().count(), 1 + 3 * 2);
    for r in 0..3 {
        assert!(out.join(format!("losses/dual_r{r}_pretrain.csv")).exists());
        assert!(out.join(format!("losses/dual_r{r}_joint.csv")).exists());
        assert!(out.join(format!("selections/dual_r{r}_ranking.csv")).exists());
    }
}

#[test]
fn exhaustive_budget_matches_all_data_reference() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let cfg = config(
        dir.path(),
        json!({
            "dataset": { "path": "blobs.csv" },
            "strategies": ["random"],
            "budgets": [24],
            "repeats": 2,
            "seed": 1
        }),
    );
    let report = run_experiment(&cfg).unwrap();
    let ds = dual_core::data::load_csv(&cfg.dataset.path, &cfg.dataset.label_column, true).unwrap();
    for (cell, split) in report.cells.iter().zip(&report.splits) {
        let (xc, scaler) = zscore_fit_transform(&ds.features.select_columns(&split.candidate_indices));
        let xt = zscore_apply(&scaler, &ds.features.select_columns(&split.test_indices));
        let yc: Vec<usize> = split.candidate_indices.iter().map(|&i| ds.labels[i]).collect();
        let yt: Vec<usize> = split.test_indices.iter().map(|&i| ds.labels[i]).collect();
        let model = svm_train(&xc, &yc, 100.0).unwrap();
        let reference = evaluate(&model, &xt, &yt).unwrap();
        assert_eq!(cell.metrics.accuracy, reference.accuracy);
    }
}

#[test]
fn oversized_budget_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let cfg = config(
        dir.path(),
        json!({
            "dataset": { "path": "blobs.csv" },
            "strategies": ["dual"],
            "budgets": [25],
            "train": { "pretrain_epochs": 1000000 }
        }),
    );
    let err = run_experiment(&cfg).unwrap_err();
    assert!(err.to_string().contains("exceeds"), "{err}");
}

#[test]
fn empty_strategy_list_gives_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_blobs(dir.path());
    let cfg = config(
        dir.path(),
        json!({ "dataset": { "path": "blobs.csv" }, "strategies": [], "budgets": [4] }),
    );
    let report = run_experiment(&cfg).unwrap();
    assert!(report.cells.is_empty());
    let out = dir.path().join("out");
    emit_outputs(&report, &out).unwrap();
    assert_eq!(fs::read_to_string(out.join("curves.csv")).unwrap().lines().count(), 1);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["cells"], json!([]));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        json!({ "dataset": { "path": "x.csv" }, "strategies": ["random"], "budgets": [1], "budget": 3 }).to_string(),
    )
    .unwrap();
    assert!(ExperimentConfig::from_json_file(&path).is_err());
    assert!("dual_wo".parse::<Strategy>().is_ok());
}
