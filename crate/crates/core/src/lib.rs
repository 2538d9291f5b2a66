//! Mondrian processes and the regression models built on them.
//!
//! * [`mondrian`]: sampling, restricting and conditionally extending
//!   Mondrian processes, plus the one-dimensional Poisson view.
//! * [`forest`]: Mondrian forest regression with Gaussian leaves and the
//!   forward regularization path over the lifetime.
//! * [`kernel_approx`]: Mondrian random features for the Laplace kernel and
//!   the backward regularization path by cut removal.
//! * [`grid`]: the Mondrian grid with per-dimension lifetimes and greedy
//!   lifetime search.
//! * [`features`]: the Mondrian feature matrix and its regularized inverse,
//!   shared by the kernel path and the grid.
//! * [`linalg`]: ridge solvers and incremental inverse updates.
//! * [`verify`]: hypothesis tests that check the distributional claims.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod features;
pub mod forest;
pub mod geometry;
pub mod grid;
pub mod kernel_approx;
pub mod linalg;
pub mod mondrian;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::BoundedBox;
pub use linalg::Matrix;
pub use mondrian::{MondrianTree, NodeId};
pub use rng::RngStream;

/// Model quality at one lifetime on a regularization path.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PathPoint {
    pub lifetime: f64,
    pub rmse_train: f64,
    pub rmse_val: f64,
}

pub(crate) fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mse = pred
        .iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64;
    mse.sqrt()
}
