//! The evaluation protocol: repeated candidate/test splits, each strategy
//! at each query budget, a linear SVM on the selected samples, metrics on
//! the held-out half.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{kmeans_select, random_select, Strategy};
use crate::data::{load_csv, split_candidates, zscore_apply, zscore_fit_transform, Dataset, LabelColumn};
use crate::dual::{run_dual, select_top_m, DualRun, SelectionResult, TrainConfig};
use crate::error::{DualError, Result};
use crate::eval::{evaluate, mean, svm_train_with, Metrics, DEFAULT_C, DEFAULT_SVM_ITERS};
use crate::linalg::Matrix;
use crate::nn::{encode, LossBreakdown};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub label_column: LabelColumn,
    #[serde(default = "default_true")]
    pub has_header: bool,
}

fn default_true() -> bool {
    true
}

/// Values to search for the DUAL tradeoffs. `gamma` is used for both row
/// penalties. Empty lists fall back to the base training config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub k_clusters: Vec<usize>,
}

impl GridConfig {
    /// The grid searched in the original evaluation.
    pub fn standard() -> Self {
        use crate::dual::{CLUSTER_GRID, TRADEOFF_GRID};
        GridConfig {
            alpha: TRADEOFF_GRID.to_vec(),
            beta: TRADEOFF_GRID.to_vec(),
            gamma: TRADEOFF_GRID.to_vec(),
            k_clusters: CLUSTER_GRID.to_vec(),
        }
    }

    fn cells(&self, base: &TrainConfig, strategy: Strategy) -> Vec<TrainConfig> {
        let or_base = |v: &[f64], b: f64| if v.is_empty() { vec![b] } else { v.to_vec() };
        let alphas = or_base(&self.alpha, base.alpha);
        let betas = if strategy == Strategy::DualWo {
            vec![0.0]
        } else {
            or_base(&self.beta, base.beta)
        };
        let gammas = or_base(&self.gamma, base.gamma);
        let ks = if self.k_clusters.is_empty() {
            vec![base.k_clusters]
        } else {
            self.k_clusters.clone()
        };
        let mut out = Vec::new();
        for &alpha in &alphas {
            for &beta in &betas {
                for &gamma in &gammas {
                    for &k in &ks {
                        out.push(TrainConfig {
                            alpha,
                            beta,
                            gamma,
                            eta: gamma,
                            k_clusters: k,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub strategies: Vec<Strategy>,
    pub budgets: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default = "default_c")]
    pub svm_c: f64,
    #[serde(default = "default_svm_iters")]
    pub svm_iterations: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_repeats() -> usize {
    5
}

fn default_c() -> f64 {
    DEFAULT_C
}

fn default_svm_iters() -> usize {
    DEFAULT_SVM_ITERS
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| DualError::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        // relative paths are relative to the config file
        if let Some(dir) = path.parent() {
            if cfg.dataset.path.is_relative() {
                cfg.dataset.path = dir.join(&cfg.dataset.path);
            }
            if let Some(out) = cfg.out_dir.as_mut().filter(|o| o.is_relative()) {
                *out = dir.join(&*out);
            }
        }
        Ok(cfg)
    }

    fn validate(&self, n_samples: usize) -> Result<()> {
        if self.repeats == 0 {
            return Err(DualError::contract("repeats must be >= 1"));
        }
        let pool = n_samples / 2;
        if self.budgets.contains(&0) {
            return Err(DualError::contract("budgets must be >= 1"));
        }
        if let Some(&m) = self.budgets.iter().find(|&&m| m > pool) {
            return Err(DualError::contract(format!(
                "budget {m} exceeds the candidate pool of {pool}"
            )));
        }
        if self.strategies.iter().any(|s| s.is_dual()) {
            self.train.validate()?;
            let max_k = self
                .grid
                .as_ref()
                .and_then(|g| g.k_clusters.iter().max().copied())
                .unwrap_or(self.train.k_clusters)
                .max(self.train.k_clusters);
            if max_k > pool {
                return Err(DualError::contract(format!(
                    "k_clusters {max_k} exceeds the candidate pool of {pool}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatInfo {
    pub repeat: usize,
    pub seed: u64,
    pub candidate_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub strategy: Strategy,
    pub budget: usize,
    pub repeat: usize,
    /// Dataset row indices, in selection order.
    pub selected: Vec<usize>,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: Strategy,
    pub budget: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_auc: f64,
    pub std_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub strategy: Strategy,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k_clusters: usize,
    /// Mean accuracy at the largest budget, the selection criterion.
    pub score: f64,
    pub chosen: bool,
}

/// Training artifacts of one DUAL run, written next to the report.
#[derive(Clone, Debug, PartialEq)]
pub struct DualArtifact {
    pub strategy: Strategy,
    pub repeat: usize,
    /// Dataset index of each candidate, in pool order.
    pub dataset_indices: Vec<usize>,
    pub selection: SelectionResult,
    pub pretrain_history: Vec<f64>,
    pub joint_history: Vec<LossBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub n_samples: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub strategies: Vec<Strategy>,
    pub budgets: Vec<usize>,
    pub repeats: usize,
    pub splits: Vec<RepeatInfo>,
    pub cells: Vec<Cell>,
    pub summary: Vec<Summary>,
    pub grid: Vec<GridPoint>,
    #[serde(skip)]
    pub artifacts: Vec<DualArtifact>,
}

/// Per-repeat data shared by every strategy.
struct RepeatContext {
    info: RepeatInfo,
    x_cand: Matrix,
    y_cand: Vec<usize>,
    x_test: Matrix,
    y_test: Vec<usize>,
}

fn repeat_seed(base: u64, repeat: usize) -> u64 {
    base.wrapping_add(repeat as u64)
}

fn build_repeats(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<RepeatContext>> {
    (0..cfg.repeats)
        .map(|r| {
            let seed = repeat_seed(cfg.seed, r);
            let split = split_candidates(ds.n_samples(), seed)?;
            let (x_cand, scaler) = zscore_fit_transform(&ds.features.select_columns(&split.candidate_indices));
            let x_test = zscore_apply(&scaler, &ds.features.select_columns(&split.test_indices));
            Ok(RepeatContext {
                y_cand: split.candidate_indices.iter().map(|&i| ds.labels[i]).collect(),
                y_test: split.test_indices.iter().map(|&i| ds.labels[i]).collect(),
                x_cand,
                x_test,
                info: RepeatInfo {
                    repeat: r,
                    seed,
                    candidate_indices: split.candidate_indices,
                    test_indices: split.test_indices,
                },
            })
        })
        .collect()
}

fn fit_and_score(
    cfg: &ExperimentConfig,
    ctx: &RepeatContext,
    train_x: &Matrix,
    test_x: &Matrix,
    local: &[usize],
) -> Result<Metrics> {
    let xs = train_x.select_columns(local);
    let ys: Vec<usize> = local.iter().map(|&j| ctx.y_cand[j]).collect();
    let model = svm_train_with(&xs, &ys, cfg.svm_c, cfg.svm_iterations)?;
    evaluate(&model, test_x, &ctx.y_test)
}

/// Runs one strategy on one repeat for every budget.
fn run_strategy(
    cfg: &ExperimentConfig,
    ctx: &RepeatContext,
    strategy: Strategy,
    train: &TrainConfig,
) -> Result<(Vec<Cell>, Option<DualArtifact>)> {
    let n = ctx.x_cand.cols();
    let to_dataset = |local: &[usize]| -> Vec<usize> {
        local.iter().map(|&j| ctx.info.candidate_indices[j]).collect()
    };
    let mut cells = Vec::with_capacity(cfg.budgets.len());
    let mut artifact = None;

    match strategy {
        Strategy::Random | Strategy::Kmeans => {
            for &m in &cfg.budgets {
                let local = if strategy == Strategy::Random {
                    random_select(n, m, ctx.info.seed.wrapping_mul(1_000_003).wrapping_add(m as u64))?
                } else {
                    kmeans_select(&ctx.x_cand, m.max(1), m, ctx.info.seed)?
                };
                let metrics = fit_and_score(cfg, ctx, &ctx.x_cand, &ctx.x_test, &local)?;
                cells.push(Cell {
                    strategy,
                    budget: m,
                    repeat: ctx.info.repeat,
                    selected: to_dataset(&local),
                    metrics,
                });
            }
        }
        Strategy::Dual | Strategy::DualWo => {
            let mut tc = train.clone();
            tc.seed = ctx.info.seed;
            if strategy == Strategy::DualWo {
                tc.beta = 0.0;
            }
            let run: DualRun = run_dual(&ctx.x_cand, &tc)?;
            // standardized like the raw features the baselines see
            let (cand_latent, scaler) = zscore_fit_transform(&encode(&run.network, &ctx.x_cand)?);
            let test_latent = zscore_apply(&scaler, &encode(&run.network, &ctx.x_test)?);
            for &m in &cfg.budgets {
                let local = select_top_m(&run.selection, m)?;
                let metrics = fit_and_score(cfg, ctx, &cand_latent, &test_latent, &local)?;
                cells.push(Cell {
                    strategy,
                    budget: m,
                    repeat: ctx.info.repeat,
                    selected: to_dataset(&local),
                    metrics,
                });
            }
            artifact = Some(DualArtifact {
                strategy,
                repeat: ctx.info.repeat,
                dataset_indices: ctx.info.candidate_indices.clone(),
                selection: run.selection,
                pretrain_history: run.pretrain_history,
                joint_history: run.joint_history,
            });
        }
    }
    Ok((cells, artifact))
}

/// Sample standard deviation; 0 for a single value.
fn std_dev(values: &[f64], mu: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

pub fn summarize(cells: &[Cell], strategies: &[Strategy], budgets: &[usize]) -> Vec<Summary> {
    let mut out = Vec::new();
    for &strategy in strategies {
        for &budget in budgets {
            let group: Vec<&Cell> = cells
                .iter()
                .filter(|c| c.strategy == strategy && c.budget == budget)
                .collect();
            if group.is_empty() {
                continue;
            }
            let acc: Vec<f64> = group.iter().map(|c| c.metrics.accuracy).collect();
            let auc: Vec<f64> = group.iter().map(|c| c.metrics.auc_macro).collect();
            let mean_accuracy = mean(acc.iter().copied());
            let mean_auc = mean(auc.iter().copied());
            out.push(Summary {
                strategy,
                budget,
                mean_accuracy,
                std_accuracy: std_dev(&acc, mean_accuracy),
                mean_auc,
                std_auc: std_dev(&auc, mean_auc),
            });
        }
    }
    out
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let ds = load_csv(&cfg.dataset.path, &cfg.dataset.label_column, cfg.dataset.has_header)?;
    run_experiment_on(&ds, cfg)
}

/// Runs the protocol on an in-memory dataset; `cfg.dataset` is ignored.
pub fn run_experiment_on(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate(ds.n_samples())?;
    let repeats = build_repeats(ds, cfg)?;

    let mut cells = Vec::new();
    let mut artifacts = Vec::new();
    let mut grid = Vec::new();
    let largest = cfg.budgets.iter().max().copied();

    for &strategy in &cfg.strategies {
        let candidates = match (&cfg.grid, strategy.is_dual()) {
            (Some(g), true) => g.cells(&cfg.train, strategy),
            _ => vec![cfg.train.clone()],
        };

        let mut best: Option<(f64, usize, Vec<Cell>, Vec<DualArtifact>)> = None;
        for (idx, train) in candidates.iter().enumerate() {
            let mut these = Vec::new();
            let mut arts = Vec::new();
            for ctx in &repeats {
                let (c, a) = run_strategy(cfg, ctx, strategy, train)?;
                these.extend(c);
                arts.extend(a);
            }
            let score = largest.map_or(0.0, |m| {
                mean(these.iter().filter(|c| c.budget == m).map(|c| c.metrics.accuracy))
            });
            if candidates.len() > 1 {
                grid.push(GridPoint {
                    strategy,
                    alpha: train.alpha,
                    beta: train.beta,
                    gamma: train.gamma,
                    k_clusters: train.k_clusters,
                    score,
                    chosen: false,
                });
            }
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, idx, these, arts));
            }
        }
        if let Some((_, idx, c, a)) = best {
            if candidates.len() > 1 {
                let offset = grid.len() - candidates.len();
                grid[offset + idx].chosen = true;
            }
            cells.extend(c);
            artifacts.extend(a);
        }
    }

    let summary = summarize(&cells, &cfg.strategies, &cfg.budgets);
    Ok(ExperimentReport {
        dataset: ds.source.clone(),
        n_samples: ds.n_samples(),
        n_features: ds.n_features(),
        n_classes: ds.n_classes(),
        strategies: cfg.strategies.clone(),
        budgets: cfg.budgets.clone(),
        repeats: cfg.repeats,
        splits: repeats.into_iter().map(|r| r.info).collect(),
        cells,
        summary,
        grid,
        artifacts,
    })
}

/// What `select` produces: a selection over a whole dataset.
#[derive(Clone, Debug)]
pub struct PoolSelection {
    pub strategy: Strategy,
    pub indices: Vec<usize>,
    /// Present for the DUAL strategies.
    pub dual: Option<DualRun>,
}

/// Selects `m` samples from the full dataset (standardized on itself).
pub fn select_from_pool(
    ds: &Dataset,
    strategy: Strategy,
    m: usize,
    train: &TrainConfig,
    seed: u64,
) -> Result<PoolSelection> {
    let n = ds.n_samples();
    if m > n {
        return Err(DualError::contract(format!("budget {m} exceeds {n} samples")));
    }
    let (x, _) = zscore_fit_transform(&ds.features);
    let (indices, dual) = match strategy {
        Strategy::Random => (random_select(n, m, seed)?, None),
        Strategy::Kmeans => (kmeans_select(&x, m.max(1), m, seed)?, None),
        Strategy::Dual | Strategy::DualWo => {
            let mut tc = train.clone();
            tc.seed = seed;
            if strategy == Strategy::DualWo {
                tc.beta = 0.0;
            }
            let run = run_dual(&x, &tc)?;
            (select_top_m(&run.selection, m)?, Some(run))
        }
    };
    Ok(PoolSelection {
        strategy,
        indices,
        dual,
    })
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| DualError::io(dir, e))?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| DualError::io(&tmp, e))?;
        f.write_all(contents).map_err(|e| DualError::io(&tmp, e))?;
        f.sync_all().map_err(|e| DualError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| DualError::io(path, e))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| DualError::contract(e.to_string()))
}

/// One row per ranked sample. `dataset_indices[j]` names pool sample `j`.
pub fn ranking_csv(selection: &SelectionResult, dataset_indices: &[usize]) -> Result<Vec<u8>> {
    csv_bytes(
        &["rank", "index", "q_hat", "p_hat", "combined"],
        selection.ranked_indices.iter().enumerate().map(|(rank, &j)| {
            vec![
                rank.to_string(),
                dataset_indices[j].to_string(),
                selection.q_hat[j].to_string(),
                selection.p_hat[j].to_string(),
                selection.combined_score[j].to_string(),
            ]
        }),
    )
}

pub fn indices_csv(indices: &[usize]) -> Result<Vec<u8>> {
    csv_bytes(
        &["rank", "index"],
        indices
            .iter()
            .enumerate()
            .map(|(r, i)| vec![r.to_string(), i.to_string()]),
    )
}

pub fn pretrain_history_csv(history: &[f64]) -> Result<Vec<u8>> {
    csv_bytes(
        &["epoch", "reconstruction"],
        history
            .iter()
            .enumerate()
            .map(|(e, l)| vec![e.to_string(), l.to_string()]),
    )
}

pub fn joint_history_csv(history: &[LossBreakdown]) -> Result<Vec<u8>> {
    csv_bytes(
        &["epoch", "reconstruction", "self_expression", "centroid", "total"],
        history.iter().enumerate().map(|(e, l)| {
            vec![
                e.to_string(),
                l.reconstruction.to_string(),
                l.self_expression.to_string(),
                l.centroid.to_string(),
                l.total.to_string(),
            ]
        }),
    )
}

pub fn curves_csv(summary: &[Summary]) -> Result<Vec<u8>> {
    csv_bytes(
        &["strategy", "m", "mean_acc", "std_acc", "mean_auc", "std_auc"],
        summary.iter().map(|s| {
            vec![
                s.strategy.to_string(),
                s.budget.to_string(),
                s.mean_accuracy.to_string(),
                s.std_accuracy.to_string(),
                s.mean_auc.to_string(),
                s.std_auc.to_string(),
            ]
        }),
    )
}

/// Writes `report.json`, `curves.csv`, `selections/` and `losses/` under
/// `dir`. Returns the paths written.
pub fn emit_outputs(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut put = |rel: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(rel);
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    put("report.json".into(), json)?;
    put("curves.csv".into(), curves_csv(&report.summary)?)?;

    for cell in &report.cells {
        put(
            format!("selections/{}_m{}_r{}.csv", cell.strategy, cell.budget, cell.repeat),
            indices_csv(&cell.selected)?,
        )?;
    }
    for art in &report.artifacts {
        let stem = format!("{}_r{}", art.strategy, art.repeat);
        put(
            format!("selections/{stem}_ranking.csv"),
            ranking_csv(&art.selection, &art.dataset_indices)?,
        )?;
        put(
            format!("losses/{stem}_pretrain.csv"),
            pretrain_history_csv(&art.pretrain_history)?,
        )?;
        put(
            format!("losses/{stem}_joint.csv"),
            joint_history_csv(&art.joint_history)?,
        )?;
    }
    Ok(written)
}
