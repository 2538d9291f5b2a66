//! Mondrian random features for the Laplace kernel.
//!
//! Each tree of an ensemble of `M` Mondrian trees with lifetime `λ` maps a
//! point to the indicator of its leaf, scaled by `1/√M`. Inner products of
//! these features estimate `exp(−λ‖x − x′‖₁)` without bias, and ridge
//! regression on them approximates Laplace kernel ridge regression.
//!
//! [`backward_path`] fits the model at the trees' full lifetime and then
//! removes cuts youngest first, merging the two sibling columns each cut
//! created, so every lifetime below `Λ` is evaluated without refitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureState, Fit};
use crate::forest::check_data;
use crate::linalg::{KernelRidge, Matrix};
use crate::mondrian::{cut_schedule, CutEvent, MondrianTree};
use crate::rmse;

/// A point on the backward path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelPathPoint {
    pub lifetime: f64,
    pub rmse_train: f64,
    pub rmse_val: f64,
    pub num_features: usize,
}

fn leaf_cells(trees: &[MondrianTree], x: &Matrix, t: f64) -> Vec<Vec<u64>> {
    (0..x.rows())
        .map(|i| trees.iter().map(|tr| tr.leaf_at(x.row(i), t) as u64).collect())
        .collect()
}

/// Features of every row of `x` under `trees` truncated at lifetime `t`.
/// Column `(m, id)` is leaf `id` of tree `m`.
pub fn build_features_at(
    trees: &[MondrianTree],
    t: f64,
    x: &Matrix,
    y: &[f64],
    is_train: &[bool],
    delta: f64,
) -> Result<FeatureState> {
    check_data(x, y)?;
    if trees.is_empty() {
        return Err(Error::InvalidArgument("need at least one tree".into()));
    }
    if is_train.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: is_train.len(),
        });
    }
    FeatureState::new(leaf_cells(trees, x, t), is_train.to_vec(), y.to_vec(), delta)
}

/// Features at the trees' full lifetime.
pub fn build_features(
    trees: &[MondrianTree],
    x: &Matrix,
    y: &[f64],
    is_train: &[bool],
    delta: f64,
) -> Result<FeatureState> {
    build_features_at(trees, f64::INFINITY, x, y, is_train, delta)
}

/// Fraction of trees placing `a` and `b` in the same leaf.
pub fn approx_kernel_points(trees: &[MondrianTree], a: &[f64], b: &[f64]) -> f64 {
    let same = trees.iter().filter(|t| t.leaf_of(a) == t.leaf_of(b)).count();
    same as f64 / trees.len() as f64
}

/// The estimated kernel matrix `Z_a Z_bᵀ` between the rows of `a` and `b`.
pub fn approx_gram(trees: &[MondrianTree], a: &Matrix, b: &Matrix) -> Matrix {
    let ca = leaf_cells(trees, a, f64::INFINITY);
    let cb = leaf_cells(trees, b, f64::INFINITY);
    let m = trees.len() as f64;
    let mut k = Matrix::zeros(a.rows(), b.rows());
    for (i, ri) in ca.iter().enumerate() {
        for (j, rj) in cb.iter().enumerate() {
            k[(i, j)] = ri.iter().zip(rj).filter(|(p, q)| p == q).count() as f64 / m;
        }
    }
    k
}

/// Validation RMSE of approximate kernel ridge regression computed through
/// the `N_train × N_train` estimated kernel. Equivalent to the feature-space
/// fit and preferable when there are more features than training points.
pub fn dual_rmse(
    trees: &[MondrianTree],
    x_train: &Matrix,
    y_train: &[f64],
    x_val: &Matrix,
    y_val: &[f64],
    delta: f64,
) -> Result<f64> {
    let k = approx_gram(trees, x_train, x_train);
    let ridge = KernelRidge::fit(&k, y_train, delta)?;
    let cross = approx_gram(trees, x_val, x_train);
    let pred: Vec<f64> = (0..x_val.rows()).map(|i| ridge.predict(cross.row(i))).collect();
    Ok(rmse(&pred, y_val))
}

/// A fitted Mondrian kernel approximation whose lifetime can be lowered one
/// cut at a time.
#[derive(Clone, Debug)]
pub struct KernelApprox {
    trees: Vec<MondrianTree>,
    state: FeatureState,
    /// Cuts still present, ascending by time.
    present: Vec<CutEvent>,
}

impl KernelApprox {
    pub fn new(
        trees: Vec<MondrianTree>,
        x: &Matrix,
        y: &[f64],
        is_train: &[bool],
        delta: f64,
    ) -> Result<Self> {
        let state = build_features(&trees, x, y, is_train, delta)?;
        let present = cut_schedule(&trees);
        Ok(Self { trees, state, present })
    }

    pub fn state(&self) -> &FeatureState {
        &self.state
    }

    pub fn trees(&self) -> &[MondrianTree] {
        &self.trees
    }

    /// Time of the youngest remaining cut, or 0 when none remain. The model
    /// is the same for every lifetime from here up to the next removed cut.
    pub fn lifetime(&self) -> f64 {
        self.present.last().map_or(0.0, |e| e.time)
    }

    pub fn num_cuts(&self) -> usize {
        self.present.len()
    }

    pub fn fit_eval(&self) -> Fit {
        self.state.fit_eval()
    }

    /// Column positions of the two leaves created by the youngest remaining
    /// cut; either may be absent when that leaf holds no points.
    pub fn youngest_cut_columns(&self) -> Option<(Option<usize>, Option<usize>)> {
        let e = self.present.last()?;
        let cut = self.trees[e.tree].node(e.node).cut.as_ref()?;
        Some((
            self.state.position((e.tree, cut.left as u64)),
            self.state.position((e.tree, cut.right as u64)),
        ))
    }

    /// Remove the youngest remaining cut. Returns false when there is none.
    pub fn remove_youngest_cut(&mut self) -> Result<bool> {
        let Some(cols) = self.youngest_cut_columns() else {
            return Ok(false);
        };
        let e = self.present.pop().expect("checked above");
        let parent = (e.tree, e.node as u64);
        match cols {
            (Some(i), Some(j)) => {
                self.state.merge_columns(i, j, parent)?;
            }
            (Some(p), None) | (None, Some(p)) => self.state.rekey(p, parent)?,
            (None, None) => {}
        }
        Ok(true)
    }

    /// Merge columns `i` and `j`, which must be the two sibling leaves of the
    /// youngest remaining cut.
    pub fn remove_cut(&mut self, i: usize, j: usize) -> Result<usize> {
        if i == j {
            return Err(Error::NotSiblings(i, j));
        }
        match self.youngest_cut_columns() {
            Some((Some(a), Some(b))) if (a, b) == (i, j) || (a, b) == (j, i) => {}
            _ => return Err(Error::NotSiblings(i, j)),
        }
        let e = self.present.pop().expect("checked above");
        self.state.merge_columns(i, j, (e.tree, e.node as u64))
    }

    /// Prediction at `x` with weights `theta` from [`Self::fit_eval`].
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> f64 {
        let t = self.lifetime();
        let cells: Vec<u64> = self.trees.iter().map(|tr| tr.leaf_at(x, t) as u64).collect();
        self.state.predict_cells(theta, &cells)
    }
}

/// Backward regularization path: one point per cut time plus lifetime 0, in
/// ascending order of lifetime.
pub fn backward_path(
    trees: Vec<MondrianTree>,
    x: &Matrix,
    y: &[f64],
    is_train: &[bool],
    delta: f64,
) -> Result<Vec<KernelPathPoint>> {
    let mut model = KernelApprox::new(trees, x, y, is_train, delta)?;
    let mut path = Vec::with_capacity(model.num_cuts() + 1);
    loop {
        let fit = model.fit_eval();
        path.push(KernelPathPoint {
            lifetime: model.lifetime(),
            rmse_train: fit.rmse_train,
            rmse_val: fit.rmse_val,
            num_features: model.state().num_features(),
        });
        if !model.remove_youngest_cut()? {
            break;
        }
    }
    path.reverse();
    Ok(path)
}
