//! Deep unsupervised active learning.
//!
//! An encoder/decoder learns a nonlinear embedding of the unlabeled pool.
//! Between them sits a selection block of two bias-free linear layers:
//! `Q` reconstructs every latent code from the others and `P` reconstructs
//! k-means centroids of the codes. Row-sparsity penalties on both push the
//! reconstruction weight onto a few samples, and those samples (largest
//! row norms) are the ones sent for labeling.
//!
//! ```no_run
//! use dual_core::{data, dual};
//!
//! let ds = data::load_csv("pool.csv", &data::LabelColumn::Name("label".into()), true)?;
//! let (x, _) = data::zscore_fit_transform(&ds.features);
//! let run = dual::run_dual(&x, &dual::TrainConfig::default())?;
//! let picked = dual::select_top_m(&run.selection, 20)?;
//! # Ok::<(), dual_core::DualError>(())
//! ```

pub mod baselines;
pub mod cluster;
pub mod data;
pub mod dual;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod linalg;
pub mod nn;
pub mod optim;

pub use error::{DualError, Result};
pub use linalg::Matrix;
