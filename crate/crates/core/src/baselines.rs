//! Reference selection strategies.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{kmeans, nearest_to_centroids, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{DualError, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Dual,
    /// DUAL with the centroid branch switched off (`beta = 0`).
    DualWo,
    Random,
    Kmeans,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Dual, Strategy::DualWo, Strategy::Random, Strategy::Kmeans];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Dual => "dual",
            Strategy::DualWo => "dual_wo",
            Strategy::Random => "random",
            Strategy::Kmeans => "kmeans",
        }
    }

    pub fn is_dual(self) -> bool {
        matches!(self, Strategy::Dual | Strategy::DualWo)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = DualError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| DualError::contract(format!("unknown strategy {s:?}")))
    }
}

/// `m` distinct indices drawn uniformly from `0..n`.
pub fn random_select(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m > n {
        return Err(DualError::contract(format!("cannot draw {m} of {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, n, m).into_vec())
}

/// k-means on `points` (columns are samples), then the points nearest the
/// centroids, round-robin over clusters.
pub fn kmeans_select(points: &Matrix, k: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m > points.cols() {
        return Err(DualError::contract(format!(
            "cannot pick {m} of {} points",
            points.cols()
        )));
    }
    let result = kmeans(points, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    nearest_to_centroids(points, &result, m)
}
