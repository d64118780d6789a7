//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its own PASS/FAIL line, then exits non-zero if any
//! failed.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use dual_core::baselines::Strategy;
use dual_core::cluster::{kmeans, DEFAULT_MAX_ITER, DEFAULT_TOL};
use dual_core::data::{make_blobs, random_centers, write_csv, zscore_fit_transform, LabelColumn};
use dual_core::dual::{run_dual, select_top_m, TrainConfig};
use dual_core::eval::{evaluate, svm_objective, svm_train, LinearSvmModel, DEFAULT_C};
use dual_core::experiment::{run_experiment_on, DatasetSpec, ExperimentConfig, GridConfig};
use dual_core::linalg::{frobenius_sq, l21_norm, row_l2_norms};
use dual_core::nn::{backward_full, forward_full, init_params, Activation, LossWeights, NetworkDims};
use dual_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(
        elapsed < limit,
        format!("took {:.1}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()),
    )
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let dims = NetworkDims {
        input_dim: 4,
        hidden: vec![5, 4],
        latent_dim: 3,
        latent_activation: Activation::Relu,
        n_samples: 6,
        n_clusters: 2,
    };
    let weights = LossWeights {
        alpha: 0.8,
        beta: 1.2,
        gamma: 0.3,
        eta: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = init_params(&dims, 1).map_err(|e| e.to_string())?;
    for s in net.param_slices_mut() {
        for v in s.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    net.project_constraints();
    let x = random_matrix(4, 6, &mut rng);
    let c = random_matrix(3, 2, &mut rng);
    let loss = |n: &dual_core::nn::DualNetwork| forward_full(n, &x, &c, weights).unwrap().loss.total;
    let grads = backward_full(&forward_full(&net, &x, &c, weights).unwrap()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let h = 1e-5;
    let n = 6;
    let q_slot = 2 * net.encoder.len();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (slot, a) in analytic.iter().enumerate() {
        for (i, &g) in a.iter().enumerate() {
            if slot == q_slot && i / n == i % n {
                continue;
            }
            let orig = probe.param_slices_mut()[slot][i];
            probe.param_slices_mut()[slot][i] = orig + h;
            let up = loss(&probe);
            probe.param_slices_mut()[slot][i] = orig - h;
            let down = loss(&probe);
            probe.param_slices_mut()[slot][i] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((g - fd).abs() / (fd.abs() + 1e-8));
        }
    }
    ensure(worst < 1e-4, format!("max relative error {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("max relative error {worst:.2e}"))
}

fn diagonal_stays_zero() -> Outcome {
    let centers = random_centers(3, 8, 4.0, 3);
    let ds = make_blobs(&[34, 33, 33], &centers, 1.0, 4).map_err(|e| e.to_string())?;
    let (x, _) = zscore_fit_transform(&ds.features);
    let cfg = TrainConfig {
        k_clusters: 3,
        ..TrainConfig::default()
    };
    let run = run_dual(&x, &cfg).map_err(|e| e.to_string())?;
    let diag = run.network.q.max_abs_diagonal();
    ensure(diag == 0.0, format!("max |diag(Q)| = {diag:e}"))?;
    Ok(format!("{} + {} epochs, max |diag(Q)| = 0", cfg.pretrain_epochs, cfg.joint_epochs))
}

fn loss_behavior() -> Outcome {
    let start = Instant::now();
    let centers = random_centers(3, 10, 5.0, 1);
    let ds = make_blobs(&[100, 100, 100], &centers, 1.0, 2).map_err(|e| e.to_string())?;
    let (x, _) = zscore_fit_transform(&ds.features);
    let cfg = TrainConfig {
        k_clusters: 3,
        ..TrainConfig::default()
    };
    let run = run_dual(&x, &cfg).map_err(|e| e.to_string())?;
    let pre = &run.pretrain_history;
    let joint = &run.joint_history;
    let ratio = pre[pre.len() - 1] / pre[0];
    let (first, last) = (joint[0].total, joint[joint.len() - 1].total);
    ensure(ratio < 0.2, format!("pretrain loss ratio {ratio:.3}"))?;
    ensure(last < first, format!("joint loss {first:.3} -> {last:.3}"))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("pretrain ratio {ratio:.3}, joint {first:.1} -> {last:.1}"))
}

fn norm_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE);
    for t in 0..100 {
        let rows = rng.random_range(1..30);
        let cols = rng.random_range(1..30);
        let scale = 10f64.powi(rng.random_range(-3..4));
        let m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale));
        let mut fro = 0.0;
        let mut l21 = 0.0;
        let norms = row_l2_norms(&m);
        for i in 0..rows {
            let mut sq = 0.0;
            for j in 0..cols {
                sq += m[(i, j)] * m[(i, j)];
            }
            fro += sq;
            l21 += sq.sqrt();
            ensure(close(norms[i], sq.sqrt()), format!("matrix {t}: row {i} norm"))?;
        }
        ensure(close(frobenius_sq(&m), fro), format!("matrix {t}: frobenius"))?;
        ensure(close(l21_norm(&m), l21), format!("matrix {t}: l21"))?;
    }
    Ok("100 matrices".into())
}

fn kmeans_recovery() -> Outcome {
    // centers pairwise 10 apart, unit noise
    let s = 10.0 / 2f64.sqrt();
    let centers = Matrix::from_rows(&[[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, s]]);
    let mut ok = 0;
    for seed in 0..5 {
        let ds = make_blobs(&[40, 40, 40], &centers, 1.0, 50 + seed).map_err(|e| e.to_string())?;
        let r = kmeans(&ds.features, 3, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).map_err(|e| e.to_string())?;
        let mut map = [usize::MAX; 3];
        let mut consistent = true;
        for (&c, &y) in r.assignment.iter().zip(&ds.labels) {
            if map[y] == usize::MAX {
                map[y] = c;
            }
            consistent &= map[y] == c;
        }
        map.sort_unstable();
        if consistent && map == [0, 1, 2] {
            ok += 1;
        }
    }
    ensure(ok == 5, format!("{ok}/5 seeds recovered"))?;
    Ok("5/5 seeds recovered".into())
}

fn singleton_preserved() -> Outcome {
    let start = Instant::now();
    let mut centers = Matrix::zeros(10, 2);
    for i in 0..10 {
        centers[(i, 1)] = 3.0;
    }
    let singleton = 99;
    let mut hits = [0; 2];
    for (slot, beta) in [1.0, 0.0].into_iter().enumerate() {
        for seed in 0..5u64 {
            let ds = make_blobs(&[99, 1], &centers, 0.5, 100 + seed).map_err(|e| e.to_string())?;
            let (x, _) = zscore_fit_transform(&ds.features);
            let cfg = TrainConfig {
                k_clusters: 2,
                alpha: 0.1,
                beta,
                gamma: 1.0,
                eta: 1.0,
                lr: 1e-3,
                joint_epochs: 2000,
                seed,
                ..TrainConfig::default()
            };
            let run = run_dual(&x, &cfg).map_err(|e| e.to_string())?;
            let top = select_top_m(&run.selection, 10).map_err(|e| e.to_string())?;
            hits[slot] += top.contains(&singleton) as usize;
        }
    }
    let msg = format!("singleton in top-10: beta=1 {}/5, beta=0 {}/5", hits[0], hits[1]);
    ensure(hits[0] >= 4 && hits[1] <= 2, msg.clone())?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(msg)
}

fn dual_beats_random() -> Outcome {
    let centers = random_centers(3, 10, 2.0, 7);
    let ds = make_blobs(&[200, 200, 200], &centers, 1.5, 11).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        dataset: DatasetSpec {
            path: "blobs".into(),
            label_column: LabelColumn::default(),
            has_header: true,
        },
        strategies: vec![Strategy::Dual, Strategy::Random],
        budgets: vec![10],
        repeats: 5,
        seed: 0,
        train: TrainConfig {
            alpha: 0.1,
            gamma: 1.0,
            eta: 1.0,
            lr: 1e-3,
            joint_epochs: 2000,
            ..TrainConfig::default()
        },
        grid: Some(GridConfig {
            beta: vec![1.0, 10.0],
            k_clusters: vec![5, 10],
            ..GridConfig::default()
        }),
        svm_c: DEFAULT_C,
        svm_iterations: dual_core::eval::DEFAULT_SVM_ITERS,
        out_dir: None,
    };
    let report = run_experiment_on(&ds, &cfg).map_err(|e| e.to_string())?;
    let acc = |s: Strategy| {
        report
            .summary
            .iter()
            .find(|x| x.strategy == s)
            .map(|x| x.mean_accuracy)
            .unwrap()
    };
    let (dual, random) = (acc(Strategy::Dual), acc(Strategy::Random));
    let msg = format!("mean accuracy at m=10: dual {dual:.4}, random {random:.4}");
    ensure(dual >= random, msg.clone())?;
    Ok(msg)
}

fn pair_count_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut hits, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    hits += 1.0;
                } else if scores[i] == scores[j] {
                    hits += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| hits / pairs)
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for t in 0..100 {
        let n = rng.random_range(2..=200);
        let k = rng.random_range(2..=4);
        // coarse scores so ties are common
        let x = Matrix::from_fn(k, n, |_, _| rng.random_range(0..8) as f64);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut weights = vec![vec![0.0; k]; k];
        for (c, w) in weights.iter_mut().enumerate() {
            w[c] = 1.0;
        }
        let model = LinearSvmModel {
            classes: (0..k).collect(),
            weights,
            intercepts: vec![0.0; k],
            c: DEFAULT_C,
            iterations: 0,
            objective: vec![0.0; k],
            degenerate: false,
        };
        let got = evaluate(&model, &x, &y).map_err(|e| e.to_string())?.auc_macro;
        let per: Vec<f64> = (0..k)
            .filter_map(|c| {
                let pos: Vec<bool> = y.iter().map(|&l| l == c).collect();
                pair_count_auc(x.row(c), &pos)
            })
            .collect();
        let expected = if per.is_empty() {
            0.5
        } else {
            per.iter().sum::<f64>() / per.len() as f64
        };
        ensure(got == expected, format!("set {t}: {got} vs pair count {expected}"))?;
    }
    Ok("100 sets, exact".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let centers = random_centers(3, 4, 4.0, 5);
    let ds = make_blobs(&[20, 20, 20], &centers, 1.0, 6).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    write_csv(&ds, &mut csv).map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("blobs.csv"), csv).map_err(|e| e.to_string())?;
    let config = serde_json::json!({
        "dataset": { "path": "blobs.csv" },
        "strategies": ["dual", "dual_wo", "random", "kmeans"],
        "budgets": [3, 6],
        "repeats": 2,
        "seed": 17,
        "train": { "k_clusters": 3, "hidden_widths": [16, 8], "pretrain_epochs": 40, "joint_epochs": 40 }
    });
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, config.to_string()).map_err(|e| e.to_string())?;

    let run = |out: &Path| -> Result<Vec<u8>, String> {
        let status = Command::new(env!("CARGO_BIN_EXE_dual"))
            .arg("experiment")
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out-dir")
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            status.status.success(),
            String::from_utf8_lossy(&status.stderr).into_owned(),
        )?;
        std::fs::read(out.join("report.json")).map_err(|e| e.to_string())
    };
    let a = run(&dir.path().join("a"))?;
    let b = run(&dir.path().join("b"))?;
    ensure(a == b, "report.json differs between runs")?;
    Ok(format!("report.json identical ({} bytes)", a.len()))
}

fn svm_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut cols = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        let cls = i % 2;
        let (cx, cy) = if cls == 0 { (-2.0, -1.0) } else { (2.0, 1.0) };
        cols.push([cx + rng.random_range(-1.0..1.0), cy + rng.random_range(-1.0..1.0)]);
        y.push(cls);
    }
    let x = Matrix::from_fn(2, 20, |i, j| cols[j][i]);
    let model = svm_train(&x, &y, DEFAULT_C).map_err(|e| e.to_string())?;
    let acc = evaluate(&model, &x, &y).map_err(|e| e.to_string())?.accuracy;
    ensure(acc == 1.0, format!("accuracy {acc}"))?;

    // coarse search over directions and offsets, scored like the SVM
    let signs: Vec<f64> = y.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect();
    let mut best_acc: f64 = 0.0;
    let mut best_obj = f64::INFINITY;
    for a in 0..360 {
        let theta = (a as f64).to_radians();
        for r in 1..=60 {
            let scale = r as f64 * 0.1;
            let w = [scale * theta.cos(), scale * theta.sin()];
            for bi in -60..=60 {
                let b = bi as f64 * 0.1;
                let correct = (0..20)
                    .filter(|&j| signs[j] * (w[0] * x[(0, j)] + w[1] * x[(1, j)] + b) > 0.0)
                    .count();
                best_acc = best_acc.max(correct as f64 / 20.0);
                best_obj = best_obj.min(svm_objective(&x, &signs, &w, b, DEFAULT_C));
            }
        }
    }
    let k = model.classes.iter().position(|&c| c == 1).unwrap();
    let obj = model.objective[k];
    ensure(acc >= best_acc - 0.02, format!("accuracy {acc} vs oracle {best_acc}"))?;
    ensure(obj <= best_obj * 1.02, format!("objective {obj:.4} vs oracle {best_obj:.4}"))?;
    Ok(format!("accuracy 1.0; objective {obj:.4} vs grid {best_obj:.4}"))
}

fn main() -> ExitCode {
    let criteria: [Check; 10] = [
        ("gradient correctness", gradient_check),
        ("constraint feasibility", diagonal_stays_zero),
        ("loss behavior", loss_behavior),
        ("norm oracles", norm_oracles),
        ("k-means recovery", kmeans_recovery),
        ("cluster-structure preservation", singleton_preserved),
        ("downstream accuracy vs random", dual_beats_random),
        ("AUC oracle", auc_oracle),
        ("determinism", determinism),
        ("SVM sanity", svm_sanity),
    ];
    // keep panic messages out of the report lines
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
