//! Linear SVM (one-vs-rest, SMO on the dual) and accuracy / AUC.

use serde::{Deserialize, Serialize};

use crate::error::{DualError, Result};
use crate::linalg::Matrix;

pub const DEFAULT_C: f64 = 100.0;
/// Cap on SMO pair updates per binary problem.
pub const DEFAULT_SVM_ITERS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    /// Class ids seen in training, ascending. One weight vector each.
    pub classes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub c: f64,
    /// SMO pair updates used, the most over the binary problems.
    pub iterations: usize,
    /// Per-class primal objective at the returned parameters.
    pub objective: Vec<f64>,
    /// Trained on a single class; always predicts it.
    pub degenerate: bool,
}

/// `0.5 |w|^2 + C sum max(0, 1 - y (w.x + b))`, with `y` in {-1, +1}.
pub fn svm_objective(x: &Matrix, signs: &[f64], w: &[f64], b: f64, c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = (0..x.cols())
        .map(|j| {
            let f = (0..x.rows()).map(|i| w[i] * x[(i, j)]).sum::<f64>() + b;
            (1.0 - signs[j] * f).max(0.0)
        })
        .sum();
    reg + c * hinge
}

const TAU: f64 = 1e-12;
/// KKT violation at which the solver stops.
const SMO_TOL: f64 = 1e-3;

/// Sequential minimal optimization on the dual of the soft-margin problem
/// (second-order working set selection, as in libsvm). Deterministic; stops
/// at `iters` pair updates or when the KKT gap drops below `SMO_TOL`.
/// Returns `(w, b, primal objective, updates)`.
fn train_binary(x: &Matrix, signs: &[f64], c: f64, iters: usize) -> (Vec<f64>, f64, f64, usize) {
    let (d, n) = x.shape();
    let dot = |a: usize, b: usize| (0..d).map(|i| x[(i, a)] * x[(i, b)]).sum::<f64>();
    let diag: Vec<f64> = (0..n).map(|j| dot(j, j)).collect();
    let mut alpha = vec![0.0; n];
    // gradient of 0.5 a'Qa - e'a, Q_ij = y_i y_j x_i.x_j
    let mut grad = vec![-1.0; n];
    let up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut updates = 0;
    while updates < iters {
        let mut i = None;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if up(alpha[t], signs[t]) && -signs[t] * grad[t] > gmax {
                gmax = -signs[t] * grad[t];
                i = Some(t);
            }
        }
        let Some(i) = i else { break };
        let mut j = None;
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(alpha[t], signs[t]) {
                continue;
            }
            let v = -signs[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let a = diag[i] + diag[t] - 2.0 * dot(i, t);
                let obj = -b * b / if a > 0.0 { a } else { TAU };
                if obj < best {
                    best = obj;
                    j = Some(t);
                }
            }
        }
        let Some(j) = j else { break };
        if gmax - gmin < SMO_TOL {
            break;
        }

        let kij = dot(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (yi, yj) = (signs[i], signs[j]);
        let quad = (diag[i] + diag[j] - 2.0 * kij).max(TAU);
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += signs[t] * (yi * dot(t, i) * di + yj * dot(t, j) * dj);
        }
        updates += 1;
    }

    let mut w = vec![0.0; d];
    for j in 0..n {
        if alpha[j] != 0.0 {
            for (i, wi) in w.iter_mut().enumerate() {
                *wi += alpha[j] * signs[j] * x[(i, j)];
            }
        }
    }
    // offset from the free multipliers, or the middle of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = signs[t] * grad[t];
        if alpha[t] >= c {
            if signs[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if signs[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free += 1;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };
    let b = -rho;
    let obj = svm_objective(x, signs, &w, b, c);
    (w, b, obj, updates)
}

pub fn svm_train(x: &Matrix, y: &[usize], c: f64) -> Result<LinearSvmModel> {
    svm_train_with(x, y, c, DEFAULT_SVM_ITERS)
}

/// One-vs-rest linear SVM on the columns of `x`.
pub fn svm_train_with(x: &Matrix, y: &[usize], c: f64, iters: usize) -> Result<LinearSvmModel> {
    if x.cols() == 0 {
        return Err(DualError::Empty("no training samples".into()));
    }
    if x.cols() != y.len() {
        return Err(DualError::contract(format!(
            "{} samples but {} labels",
            x.cols(),
            y.len()
        )));
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();

    if classes.len() == 1 {
        return Ok(LinearSvmModel {
            classes,
            weights: vec![vec![0.0; x.rows()]],
            intercepts: vec![0.0],
            c,
            iterations: 0,
            objective: vec![0.0],
            degenerate: true,
        });
    }

    let mut weights = Vec::with_capacity(classes.len());
    let mut intercepts = Vec::with_capacity(classes.len());
    let mut objective = Vec::with_capacity(classes.len());
    let mut updates = 0;
    for &cls in &classes {
        let signs: Vec<f64> = y.iter().map(|&l| if l == cls { 1.0 } else { -1.0 }).collect();
        let (w, b, obj, used) = train_binary(x, &signs, c, iters);
        updates = updates.max(used);
        weights.push(w);
        intercepts.push(b);
        objective.push(obj);
    }
    Ok(LinearSvmModel {
        classes,
        weights,
        intercepts,
        c,
        iterations: updates,
        objective,
        degenerate: false,
    })
}

impl LinearSvmModel {
    /// `classes.len() x n` decision values.
    pub fn decision_scores(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.weights[0].len() {
            return Err(DualError::contract(format!(
                "model expects {} features, got {}",
                self.weights[0].len(),
                x.rows()
            )));
        }
        Ok(Matrix::from_fn(self.classes.len(), x.cols(), |k, j| {
            (0..x.rows()).map(|i| self.weights[k][i] * x[(i, j)]).sum::<f64>() + self.intercepts[k]
        }))
    }

    /// Class with the largest decision value; ties go to the smaller id.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let s = self.decision_scores(x)?;
        Ok((0..x.cols())
            .map(|j| {
                let mut best = 0;
                for k in 1..s.rows() {
                    if s[(k, j)] > s[(best, j)] {
                        best = k;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAuc {
    pub class: usize,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub auc_macro: f64,
    pub per_class_auc: Vec<ClassAuc>,
    /// Classes with no AUC: absent from the test labels, or covering all
    /// of them.
    pub excluded_classes: Vec<usize>,
}

/// Binary AUC by the rank-sum statistic with mid-ranks for ties. `None`
/// when either side is empty.
pub fn auc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-rest AUC for every class in `classes`, from a
/// `classes.len() x n` score matrix; returns the per-class values and the
/// excluded classes.
pub fn one_vs_rest_auc(scores: &Matrix, y: &[usize], classes: &[usize]) -> (Vec<ClassAuc>, Vec<usize>) {
    let mut per = Vec::new();
    let mut excluded = Vec::new();
    for (k, &cls) in classes.iter().enumerate() {
        let positive: Vec<bool> = y.iter().map(|&l| l == cls).collect();
        match auc_binary(scores.row(k), &positive) {
            Some(auc) => per.push(ClassAuc { class: cls, auc }),
            None => excluded.push(cls),
        }
    }
    (per, excluded)
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Accuracy and macro one-vs-rest AUC on a test set. Classes the model
/// never saw are scored with a constant, which puts their AUC at 1/2.
pub fn evaluate(model: &LinearSvmModel, x: &Matrix, y: &[usize]) -> Result<Metrics> {
    if x.cols() == 0 {
        return Err(DualError::Empty("empty test set".into()));
    }
    if x.cols() != y.len() {
        return Err(DualError::contract(format!(
            "{} samples but {} labels",
            x.cols(),
            y.len()
        )));
    }
    let pred = model.predict(x)?;
    let correct = pred.iter().zip(y).filter(|(p, t)| p == t).count();
    let accuracy = correct as f64 / y.len() as f64;

    let mut classes: Vec<usize> = model.classes.iter().chain(y).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let model_scores = model.decision_scores(x)?;
    let scores = Matrix::from_fn(classes.len(), x.cols(), |k, j| {
        match model.classes.iter().position(|&c| c == classes[k]) {
            Some(row) if !model.degenerate => model_scores[(row, j)],
            _ => 0.0,
        }
    });
    let (per_class_auc, excluded_classes) = one_vs_rest_auc(&scores, y, &classes);
    let auc_macro = if per_class_auc.is_empty() {
        0.5
    } else {
        mean(per_class_auc.iter().map(|c| c.auc))
    };
    Ok(Metrics {
        accuracy,
        auc_macro,
        per_class_auc,
        excluded_classes,
    })
}
