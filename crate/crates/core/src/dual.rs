//! Three-stage training and sample ranking.
//!
//! 1. Pretrain encoder and decoder as a plain autoencoder.
//! 2. Cluster the latent codes with k-means; the centroids are frozen.
//! 3. Train everything jointly on `L_r + alpha L_a + beta L_c`, with the
//!    decoder reading `Phi Q`.
//!
//! Samples are then ranked by the min-max normalized row norms of `Q`
//! plus those of `P`.

use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans_best_of, KMeansResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{DualError, Result};
use crate::linalg::{row_l2_norms, Matrix};
use crate::nn::{
    Activation,
    backward_full, encode, forward_autoencoder, forward_full, init_params, DualNetwork, LossBreakdown,
    LossWeights, NetworkDims,
};
use crate::optim::AdamState;

/// Values searched by the experiment grid for each tradeoff.
pub const TRADEOFF_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
/// Cluster counts searched by the experiment grid.
pub const CLUSTER_GRID: [usize; 4] = [5, 10, 20, 50];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the self-expression loss.
    pub alpha: f64,
    /// Weight of the centroid loss; 0 disables the cluster branch.
    pub beta: f64,
    /// Row-sparsity weight on Q.
    pub gamma: f64,
    /// Row-sparsity weight on P.
    pub eta: f64,
    pub k_clusters: usize,
    /// Latent width; `None` means `min(d, 32)`.
    pub latent_dim: Option<usize>,
    pub hidden_widths: Vec<usize>,
    /// Activation on the latent layer.
    pub latent_activation: Activation,
    pub pretrain_epochs: usize,
    pub joint_epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// Independent k-means seedings; the lowest-inertia run is kept.
    pub kmeans_restarts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.1,
            eta: 0.1,
            k_clusters: 5,
            latent_dim: None,
            hidden_widths: vec![128, 64],
            latent_activation: Activation::Relu,
            pretrain_epochs: 500,
            joint_epochs: 500,
            lr: 1e-4,
            seed: 0,
            kmeans_max_iter: DEFAULT_MAX_ITER,
            kmeans_tol: DEFAULT_TOL,
            kmeans_restarts: 10,
        }
    }
}

impl TrainConfig {
    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            eta: self.eta,
        }
    }

    pub fn latent_dim_for(&self, input_dim: usize) -> usize {
        self.latent_dim.unwrap_or(input_dim.min(32))
    }

    pub fn dims(&self, input_dim: usize, n_samples: usize) -> NetworkDims {
        NetworkDims {
            input_dim,
            hidden: self.hidden_widths.clone(),
            latent_dim: self.latent_dim_for(input_dim),
            latent_activation: self.latent_activation,
            n_samples,
            n_clusters: self.k_clusters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("eta", self.eta),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DualError::contract(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.k_clusters == 0 {
            return Err(DualError::contract("k_clusters must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DualError::contract("lr must be positive"));
        }
        if self.latent_dim == Some(0) || self.hidden_widths.contains(&0) {
            return Err(DualError::contract("layer widths must be positive"));
        }
        Ok(())
    }

    /// Whether the centroid branch contributes to the ranking.
    pub fn uses_centroid_scores(&self) -> bool {
        self.beta > 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Most representative first; a permutation of `0..n`.
    pub ranked_indices: Vec<usize>,
    pub q_hat: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub combined_score: Vec<f64>,
}

/// Scales to `[0, 1]`; a constant vector maps to all zeros.
fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Ranks samples by normalized row norms of `Q` plus those of `P`.
pub fn score_samples(q: &Matrix, p: &Matrix) -> Result<SelectionResult> {
    score_samples_with(q, p, true)
}

/// Like [`score_samples`], but `p_hat` only enters the combined score
/// when `include_p` is set. It is reported either way.
pub fn score_samples_with(q: &Matrix, p: &Matrix, include_p: bool) -> Result<SelectionResult> {
    if q.rows() != p.rows() {
        return Err(DualError::contract(format!(
            "Q has {} rows but P has {}",
            q.rows(),
            p.rows()
        )));
    }
    if !q.is_finite() || !p.is_finite() {
        return Err(DualError::contract("selection coefficients are not finite"));
    }
    let q_hat = min_max(&row_l2_norms(q));
    let p_hat = min_max(&row_l2_norms(p));
    let combined_score: Vec<f64> = if include_p {
        q_hat.iter().zip(&p_hat).map(|(a, b)| a + b).collect()
    } else {
        q_hat.clone()
    };
    let mut ranked_indices: Vec<usize> = (0..q.rows()).collect();
    // stable: equal scores keep ascending index order
    ranked_indices.sort_by(|&a, &b| combined_score[b].total_cmp(&combined_score[a]));
    Ok(SelectionResult {
        ranked_indices,
        q_hat,
        p_hat,
        combined_score,
    })
}

pub fn select_top_m(result: &SelectionResult, m: usize) -> Result<Vec<usize>> {
    let n = result.ranked_indices.len();
    if m > n {
        return Err(DualError::contract(format!("budget {m} exceeds {n} samples")));
    }
    Ok(result.ranked_indices[..m].to_vec())
}

fn with_epoch(err: DualError, epoch: usize) -> DualError {
    match err {
        DualError::Numeric { stage, .. } => DualError::Numeric {
            stage,
            epoch: Some(epoch),
        },
        other => other,
    }
}

/// Full-batch Adam on the autoencoder loss. Returns the loss before each
/// update followed by the loss after the last one (`epochs + 1` values).
pub fn pretrain(net: &mut DualNetwork, x: &Matrix, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut adam = AdamState::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.pretrain_epochs + 1);
    for epoch in 0..=cfg.pretrain_epochs {
        let trace = forward_autoencoder(net, x).map_err(|e| with_epoch(e, epoch))?;
        history.push(trace.loss.total);
        if epoch == cfg.pretrain_epochs {
            break;
        }
        let grads = backward_full(&trace).map_err(|e| with_epoch(e, epoch))?;
        adam.step(net, &grads);
    }
    Ok(history)
}

/// Full-batch Adam on the joint objective with frozen centroids. History
/// layout matches [`pretrain`].
pub fn joint_train(
    net: &mut DualNetwork,
    x: &Matrix,
    centroids: &Matrix,
    cfg: &TrainConfig,
) -> Result<Vec<LossBreakdown>> {
    if net.q.max_abs_diagonal() != 0.0 {
        return Err(DualError::contract("Q must start with a zero diagonal"));
    }
    let weights = cfg.loss_weights();
    let mut adam = AdamState::new(cfg.lr);
    let mut history = Vec::with_capacity(cfg.joint_epochs + 1);
    for epoch in 0..=cfg.joint_epochs {
        let trace = forward_full(net, x, centroids, weights).map_err(|e| with_epoch(e, epoch))?;
        history.push(trace.loss);
        if epoch == cfg.joint_epochs {
            break;
        }
        let grads = backward_full(&trace).map_err(|e| with_epoch(e, epoch))?;
        adam.step(net, &grads);
    }
    Ok(history)
}

/// Everything a DUAL run produces.
#[derive(Clone, Debug)]
pub struct DualRun {
    pub selection: SelectionResult,
    pub network: DualNetwork,
    pub clustering: KMeansResult,
    pub pretrain_history: Vec<f64>,
    pub joint_history: Vec<LossBreakdown>,
}

fn kmeans_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Pretrain, cluster the latent codes, train jointly, rank. `x` is the
/// standardized `d x n` candidate pool.
pub fn run_dual(x: &Matrix, cfg: &TrainConfig) -> Result<DualRun> {
    cfg.validate()?;
    let (d, n) = x.shape();
    if n == 0 || d == 0 {
        return Err(DualError::Empty("no samples to select from".into()));
    }
    if cfg.k_clusters > n {
        return Err(DualError::contract(format!(
            "k_clusters={} exceeds {n} samples",
            cfg.k_clusters
        )));
    }
    if !x.is_finite() {
        return Err(DualError::contract("input contains non-finite values"));
    }

    let mut net = init_params(&cfg.dims(d, n), cfg.seed)?;
    let pretrain_history = pretrain(&mut net, x, cfg)?;

    let latent = encode(&net, x)?;
    let clustering = kmeans_best_of(
        &latent,
        cfg.k_clusters,
        kmeans_seed(cfg.seed),
        cfg.kmeans_max_iter,
        cfg.kmeans_tol,
        cfg.kmeans_restarts.max(1),
    )?;

    let joint_history = joint_train(&mut net, x, &clustering.centroids, cfg)?;
    let selection = score_samples_with(&net.q, &net.p, cfg.uses_centroid_scores())?;
    Ok(DualRun {
        selection,
        network: net,
        clustering,
        pretrain_history,
        joint_history,
    })
}
