//! Browser bindings: generate 2-D blobs, cluster them, and pick samples with
//! DUAL or a baseline. Inputs and outputs are JSON strings.

use dual_core::baselines::{kmeans_select, random_select, Strategy};
use dual_core::cluster::{kmeans, DEFAULT_MAX_ITER, DEFAULT_TOL};
use dual_core::data::{make_blobs, random_centers, zscore_fit_transform};
use dual_core::dual::{run_dual, select_top_m, TrainConfig};
use dual_core::{DualError, Matrix, Result};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct Points {
    /// One `[x, y, ...]` entry per sample.
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub labels: Vec<usize>,
}

impl Points {
    fn matrix(&self) -> Result<Matrix> {
        let n = self.points.len();
        let d = self.points.first().map_or(0, Vec::len);
        if n == 0 || d == 0 {
            return Err(DualError::Empty("no points".into()));
        }
        if self.points.iter().any(|p| p.len() != d) {
            return Err(DualError::Contract("points have different lengths".into()));
        }
        Ok(Matrix::from_fn(d, n, |i, j| self.points[j][i]))
    }
}

/// Settings for DUAL in the demo, sized for interactive use.
#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoTrain {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k_clusters: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for DemoTrain {
    fn default() -> Self {
        DemoTrain {
            alpha: 0.1,
            beta: 1.0,
            gamma: 1.0,
            k_clusters: 4,
            epochs: 300,
            lr: 1e-3,
        }
    }
}

impl DemoTrain {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            eta: self.gamma,
            k_clusters: self.k_clusters,
            hidden_widths: vec![32, 16],
            pretrain_epochs: self.epochs,
            joint_epochs: self.epochs,
            lr: self.lr,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Selection {
    pub selected: Vec<usize>,
    /// Combined score per sample, present for the DUAL strategies.
    pub scores: Option<Vec<f64>>,
    pub pretrain_loss: Vec<f64>,
    pub joint_loss: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Clusters {
    pub assignment: Vec<usize>,
    /// One `[x, y, ...]` entry per centroid.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

/// `counts.len()` Gaussian blobs in the plane with centers in
/// `[-spread, spread]^2`.
pub fn blobs(counts: &[usize], sigma: f64, spread: f64, seed: u64) -> Result<Points> {
    let centers = random_centers(counts.len(), 2, spread, seed);
    let ds = make_blobs(counts, &centers, sigma, seed.wrapping_add(1))?;
    let points = (0..ds.n_samples()).map(|j| ds.features.column(j)).collect();
    Ok(Points {
        points,
        labels: ds.labels,
    })
}

pub fn cluster(points: &Points, k: usize, seed: u64) -> Result<Clusters> {
    let x = points.matrix()?;
    let r = kmeans(&x, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    Ok(Clusters {
        centroids: (0..r.k()).map(|c| r.centroids.column(c)).collect(),
        assignment: r.assignment,
        inertia: r.inertia,
    })
}

pub fn select(points: &Points, strategy: Strategy, m: usize, seed: u64, train: &DemoTrain) -> Result<Selection> {
    let (x, _) = zscore_fit_transform(&points.matrix()?);
    let n = x.cols();
    if m == 0 || m > n {
        return Err(DualError::Contract(format!("budget {m} outside 1..={n}")));
    }
    let mut out = Selection {
        selected: Vec::new(),
        scores: None,
        pretrain_loss: Vec::new(),
        joint_loss: Vec::new(),
    };
    match strategy {
        Strategy::Random => out.selected = random_select(n, m, seed)?,
        Strategy::Kmeans => out.selected = kmeans_select(&x, m, m, seed)?,
        Strategy::Dual | Strategy::DualWo => {
            let mut cfg = train.config(seed);
            if strategy == Strategy::DualWo {
                cfg.beta = 0.0;
            }
            let run = run_dual(&x, &cfg)?;
            out.selected = select_top_m(&run.selection, m)?;
            out.scores = Some(run.selection.combined_score);
            out.pretrain_loss = run.pretrain_history;
            out.joint_loss = run.joint_history.iter().map(|l| l.total).collect();
        }
    }
    Ok(out)
}

fn js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn parse_points(json: &str) -> Result<Points> {
    Ok(serde_json::from_str(json)?)
}

#[wasm_bindgen(js_name = generateBlobs)]
pub fn generate_blobs(counts: &[u32], sigma: f64, spread: f64, seed: u32) -> std::result::Result<String, JsError> {
    let counts: Vec<usize> = counts.iter().map(|&c| c as usize).collect();
    js(blobs(&counts, sigma, spread, seed as u64))
}

#[wasm_bindgen(js_name = kmeans)]
pub fn kmeans_js(points_json: &str, k: u32, seed: u32) -> std::result::Result<String, JsError> {
    js(parse_points(points_json).and_then(|p| cluster(&p, k as usize, seed as u64)))
}

/// `strategy` is one of `dual`, `dual_wo`, `random`, `kmeans`;
/// `train_json` may be empty for the defaults.
#[wasm_bindgen(js_name = selectSamples)]
pub fn select_samples(
    points_json: &str,
    strategy: &str,
    m: u32,
    seed: u32,
    train_json: &str,
) -> std::result::Result<String, JsError> {
    js((|| {
        let points = parse_points(points_json)?;
        let strategy: Strategy = strategy.parse()?;
        let train: DemoTrain = if train_json.trim().is_empty() {
            DemoTrain::default()
        } else {
            serde_json::from_str(train_json)?
        };
        select(&points, strategy, m as usize, seed as u64, &train)
    })())
}
