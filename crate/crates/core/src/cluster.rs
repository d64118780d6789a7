//! Lloyd's k-means with k-means++ seeding, on column-sample matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DualError, Result};
use crate::linalg::Matrix;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    /// `dim x k`, one centroid per column.
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centroids.cols()
    }

    /// Sum of squared distances to the assigned centroid, per cluster.
    pub fn cluster_inertia(&self, points: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        for (j, &c) in self.assignment.iter().enumerate() {
            out[c] += sq_dist(points, j, &self.centroids, c);
        }
        out
    }
}

fn sq_dist(points: &Matrix, j: usize, centroids: &Matrix, c: usize) -> f64 {
    (0..points.rows())
        .map(|i| {
            let d = points[(i, j)] - centroids[(i, c)];
            d * d
        })
        .sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(points: &Matrix, j: usize, centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.cols() {
        let d = sq_dist(points, j, centroids, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seed(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.cols();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n)
        .map(|j| sq_dist(points, j, &points.select_columns(&chosen[..1]), 0))
        .collect();

    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (j, &d) in dist.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(j);
                    break;
                }
            }
            // rounding can leave target just past the final sum
            pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every point coincides with a chosen seed
            (0..n).find(|j| !chosen.contains(j)).unwrap()
        };
        chosen.push(next);
        let c = points.select_columns(&[next]);
        for (j, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, j, &c, 0));
        }
    }
    points.select_columns(&chosen)
}

fn update_centroids(points: &Matrix, assignment: &[usize], k: usize) -> (Matrix, Vec<usize>) {
    let dim = points.rows();
    let mut sums = Matrix::zeros(dim, k);
    let mut counts = vec![0usize; k];
    for (j, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for i in 0..dim {
            sums[(i, c)] += points[(i, j)];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            for i in 0..dim {
                sums[(i, c)] /= inv;
            }
        }
    }
    (sums, counts)
}

/// Moves the point farthest from its centroid into each empty cluster.
/// Returns true if anything was repaired.
fn repair_empty(points: &Matrix, assignment: &mut [usize], centroids: &mut Matrix, counts: &mut [usize]) -> bool {
    let mut repaired = false;
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let far = (0..points.cols())
            .filter(|&j| counts[assignment[j]] > 1)
            .map(|j| (j, sq_dist(points, j, centroids, assignment[j])))
            .fold(None, |best: Option<(usize, f64)>, (j, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((j, d)),
            });
        let Some((j, _)) = far else { break };
        counts[assignment[j]] -= 1;
        assignment[j] = empty;
        counts[empty] = 1;
        let (c, _) = update_centroids(points, assignment, counts.len());
        *centroids = c;
        repaired = true;
    }
    repaired
}

/// Clusters the columns of `points` into `k` groups.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansResult> {
    let n = points.cols();
    if k == 0 {
        return Err(DualError::contract("k-means needs k >= 1"));
    }
    if k > n {
        return Err(DualError::contract(format!("k-means with k={k} on {n} points")));
    }
    if !points.is_finite() {
        return Err(DualError::contract("k-means input contains non-finite values"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seed(points, k, &mut rng);
    let mut assignment: Vec<usize> = (0..n).map(|j| nearest(points, j, &centroids).0).collect();

    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (mut next, mut counts) = update_centroids(points, &assignment, k);
        repair_empty(points, &mut assignment, &mut next, &mut counts);

        let movement = (0..k)
            .map(|c| {
                (0..points.rows())
                    .map(|i| (next[(i, c)] - centroids[(i, c)]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = next;

        let reassigned: Vec<usize> = (0..n).map(|j| nearest(points, j, &centroids).0).collect();
        let changed = reassigned != assignment;
        assignment = reassigned;
        let mut counts = vec![0usize; k];
        assignment.iter().for_each(|&c| counts[c] += 1);
        if counts.contains(&0) {
            // the next update repairs it
            continue;
        }
        if !changed || movement < tol {
            break;
        }
    }
    let (fixed, mut counts) = update_centroids(points, &assignment, k);
    if counts.contains(&0) {
        centroids = fixed;
        repair_empty(points, &mut assignment, &mut centroids, &mut counts);
    }

    let inertia = (0..n).map(|j| sq_dist(points, j, &centroids, assignment[j])).sum();
    Ok(KMeansResult {
        centroids,
        assignment,
        inertia,
        iterations,
    })
}

/// Runs [`kmeans`] `restarts` times from different seedings and keeps the
/// lowest inertia (earliest run on ties).
pub fn kmeans_best_of(
    points: &Matrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    restarts: usize,
) -> Result<KMeansResult> {
    let mut best = kmeans(points, k, seed, max_iter, tol)?;
    for r in 1..restarts as u64 {
        let run = kmeans(points, k, seed.wrapping_add(r), max_iter, tol)?;
        if run.inertia < best.inertia {
            best = run;
        }
    }
    Ok(best)
}

/// Picks `m` indices by taking points nearest their centroid, one per
/// cluster per round. Clusters are visited in descending order of their
/// inertia (ties by cluster id).
pub fn nearest_to_centroids(points: &Matrix, result: &KMeansResult, m: usize) -> Result<Vec<usize>> {
    let n = points.cols();
    if m > n {
        return Err(DualError::contract(format!("cannot pick {m} of {n} points")));
    }
    let k = result.k();
    let per_cluster = result.cluster_inertia(points);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| per_cluster[b].total_cmp(&per_cluster[a]).then(a.cmp(&b)));

    let mut members: Vec<Vec<(f64, usize)>> = vec![Vec::new(); k];
    for j in 0..n {
        let c = result.assignment[j];
        members[c].push((sq_dist(points, j, &result.centroids, c), j));
    }
    for list in &mut members {
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }

    let mut picked = Vec::with_capacity(m);
    let mut round = 0;
    while picked.len() < m {
        for &c in &order {
            if picked.len() == m {
                break;
            }
            if let Some(&(_, j)) = members[c].get(round) {
                picked.push(j);
            }
        }
        round += 1;
    }
    Ok(picked)
}
