//! Dataset loading, standardization, candidate/test splitting and the
//! synthetic blob generator.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DualError, Result};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `d x n`, one sample per column.
    pub features: Matrix,
    /// Contiguous class ids `0..n_classes`.
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Original label strings, indexed by class id.
    pub class_names: Vec<String>,
    pub source: String,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.cols()
    }

    pub fn n_features(&self) -> usize {
        self.features.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Which CSV column holds the label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("label".into())
    }
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DualError::io(path, e))?;
    read_csv(file, label, has_header, &path.display().to_string())
}

/// Parses comma-separated samples, one per row. Label strings are mapped
/// to class ids in order of first appearance.
pub fn read_csv(reader: impl Read, label: &LabelColumn, has_header: bool, source: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let label_idx = match (label, &header) {
        (LabelColumn::Index(i), _) => *i,
        (LabelColumn::Name(name), Some(h)) => h
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DualError::contract(format!("no column named {name:?}")))?,
        (LabelColumn::Name(name), None) => {
            return Err(DualError::contract(format!(
                "label column {name:?} given by name but the file has no header"
            )))
        }
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut width = None;
    let first_row = if has_header { 2 } else { 1 };

    for (r, record) in rdr.records().enumerate() {
        let row = r + first_row;
        let record = record?;
        if label_idx >= record.len() {
            return Err(DualError::Parse {
                row,
                column: label_idx.to_string(),
                message: "label column out of range".into(),
            });
        }
        if let Some(w) = width {
            if record.len() != w {
                return Err(DualError::Parse {
                    row,
                    column: "*".into(),
                    message: format!("expected {w} fields, found {}", record.len()),
                });
            }
        }
        width = Some(record.len());

        for (c, field) in record.iter().enumerate() {
            let column = || {
                header
                    .as_ref()
                    .map_or_else(|| c.to_string(), |h| h[c].clone())
            };
            if field.is_empty() {
                return Err(DualError::Parse {
                    row,
                    column: column(),
                    message: "missing value".into(),
                });
            }
            if c == label_idx {
                let next = class_names.len();
                let id = *class_ids.entry(field.to_string()).or_insert_with(|| {
                    class_names.push(field.to_string());
                    next
                });
                labels.push(id);
            } else {
                let v: f64 = field.parse().map_err(|_| DualError::Parse {
                    row,
                    column: column(),
                    message: format!("not a number: {field:?}"),
                })?;
                if !v.is_finite() {
                    return Err(DualError::Parse {
                        row,
                        column: column(),
                        message: "non-finite value".into(),
                    });
                }
                values.push(v);
            }
        }
    }

    let n = labels.len();
    if n == 0 {
        return Err(DualError::Empty(format!("{source}: no data rows")));
    }
    let d = values.len() / n;
    let feature_names = match &header {
        Some(h) => h
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != label_idx)
            .map(|(_, s)| s.clone())
            .collect(),
        None => (0..d).map(|i| format!("x{i}")).collect(),
    };
    // values are sample-major; store feature-major
    let features = Matrix::from_vec(n, d, values)?.transpose();
    Ok(Dataset {
        features,
        labels,
        feature_names,
        class_names,
        source: source.to_string(),
    })
}

/// Writes samples as CSV rows with a header and a trailing `label` column.
pub fn write_csv(ds: &Dataset, mut out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    let mut header = ds.feature_names.clone();
    header.push("label".into());
    w.write_record(&header)?;
    for j in 0..ds.n_samples() {
        let mut rec: Vec<String> = ds.features.column(j).iter().map(|v| v.to_string()).collect();
        rec.push(ds.class_names[ds.labels[j]].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| DualError::io(&ds.source, e))?;
    Ok(())
}

/// Per-feature mean and standard deviation from a fit set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant features.
    pub std: Vec<f64>,
}

pub fn zscore_fit_transform(features: &Matrix) -> (Matrix, Scaler) {
    let n = features.cols() as f64;
    let mut mean = Vec::with_capacity(features.rows());
    let mut std = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let row = features.row(i);
        let mu = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let sd = var.sqrt();
        mean.push(mu);
        std.push(if sd > 0.0 { sd } else { 1.0 });
    }
    let scaler = Scaler { mean, std };
    (zscore_apply(&scaler, features), scaler)
}

pub fn zscore_apply(scaler: &Scaler, features: &Matrix) -> Matrix {
    Matrix::from_fn(features.rows(), features.cols(), |i, j| {
        (features[(i, j)] - scaler.mean[i]) / scaler.std[i]
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    /// Sorted ascending.
    pub candidate_indices: Vec<usize>,
    /// Sorted ascending.
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Random half/half split: `floor(n/2)` candidates, the rest for testing.
pub fn split_candidates(n: usize, seed: u64) -> Result<Split> {
    if n < 2 {
        return Err(DualError::contract(format!("cannot split {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_indices = idx.split_off(n / 2);
    let mut candidate_indices = idx;
    candidate_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        candidate_indices,
        test_indices,
        seed,
    })
}

/// Isotropic Gaussian blobs. `centers` is `d x k`; cluster `c` gets
/// `counts[c]` samples labelled `c`, emitted cluster by cluster.
pub fn make_blobs(counts: &[usize], centers: &Matrix, sigma: f64, seed: u64) -> Result<Dataset> {
    if counts.len() != centers.cols() {
        return Err(DualError::contract(format!(
            "{} counts for {} centers",
            counts.len(),
            centers.cols()
        )));
    }
    let d = centers.rows();
    let n: usize = counts.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Matrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    let mut j = 0;
    for (c, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            for i in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                features[(i, j)] = centers[(i, c)] + sigma * z;
            }
            labels.push(c);
            j += 1;
        }
    }
    Ok(Dataset {
        features,
        labels,
        feature_names: (0..d).map(|i| format!("x{i}")).collect(),
        class_names: (0..counts.len()).map(|c| c.to_string()).collect(),
        source: format!("blobs(seed={seed})"),
    })
}

/// `k` centers drawn uniformly from `[-spread, spread]^d`.
pub fn random_centers(k: usize, d: usize, spread: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(d, k, |_, _| rng.random_range(-spread..=spread))
}
