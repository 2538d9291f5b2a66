//! Mondrian forest regression.
//!
//! Each leaf carries a conjugate Gaussian posterior over its mean given the
//! training targets that fall into it; the forest predicts the average of
//! the leaf posterior means across trees. [`forward_path`] evaluates the
//! model at every cut time from lifetime 0 up to the trees' lifetime while
//! only touching the points in the leaf being split.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundedBox;
use crate::linalg::Matrix;
use crate::mondrian::{cut_schedule, sample_trees, MondrianTree, NodeId};
use crate::{rmse, PathPoint};

/// Relative padding applied to every side of the data bounding box.
pub const BOX_PADDING: f64 = 1e-9;

/// Prior `N(prior_mean, prior_var)` on a leaf mean and Gaussian observation
/// noise with variance `noise_var`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub prior_mean: f64,
    pub prior_var: f64,
    pub noise_var: f64,
}

impl GaussianParams {
    pub fn new(prior_mean: f64, prior_var: f64, noise_var: f64) -> Result<Self> {
        if !prior_mean.is_finite() {
            return Err(Error::InvalidParams(format!("prior mean {prior_mean}")));
        }
        for (name, v) in [("prior variance", prior_var), ("noise variance", noise_var)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self {
            prior_mean,
            prior_var,
            noise_var,
        })
    }

    /// Data-driven defaults: prior mean and variance from the targets and
    /// noise variance at half the target variance. A heuristic, not derived
    /// from the model.
    pub fn from_targets(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyData);
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let var = if var > 0.0 { var } else { 1.0 };
        Self::new(mean, var, var / 2.0)
    }

    pub fn prior_precision(&self) -> f64 {
        1.0 / self.prior_var
    }

    pub fn noise_precision(&self) -> f64 {
        1.0 / self.noise_var
    }

    /// Posterior `(mean, variance)` given `count` targets summing to `sum_y`.
    pub fn posterior(&self, count: usize, sum_y: f64) -> (f64, f64) {
        let (pp, pn) = (self.prior_precision(), self.noise_precision());
        let precision = pp + count as f64 * pn;
        ((pp * self.prior_mean + pn * sum_y) / precision, 1.0 / precision)
    }
}

/// Conjugate posterior of the mean given the observed targets.
pub fn gaussian_posterior(params: &GaussianParams, targets: &[f64]) -> (f64, f64) {
    params.posterior(targets.len(), targets.iter().sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub count: usize,
    pub sum_y: f64,
    pub post_mean: f64,
    pub post_var: f64,
}

impl LeafStats {
    pub fn new(params: &GaussianParams, count: usize, sum_y: f64) -> Self {
        let (post_mean, post_var) = params.posterior(count, sum_y);
        Self {
            count,
            sum_y,
            post_mean,
            post_var,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForestModel {
    trees: Vec<MondrianTree>,
    params: GaussianParams,
    horizon: f64,
    leaf_stats: Vec<HashMap<NodeId, LeafStats>>,
    bbox: BoundedBox,
}

/// Bounding box of all rows of `x` and `extra`, padded by [`BOX_PADDING`].
pub fn data_box(x: &Matrix, extra: Option<&Matrix>) -> Result<BoundedBox> {
    let rows = (0..x.rows())
        .map(|i| x.row(i))
        .chain(extra.into_iter().flat_map(|e| (0..e.rows()).map(move |i| e.row(i))));
    Ok(BoundedBox::from_points(rows)?.padded(BOX_PADDING))
}

pub(crate) fn check_data(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::EmptyData);
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    for i in 0..x.rows() {
        if let Some(col) = x.row(i).iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i, col });
        }
        if !y[i].is_finite() {
            return Err(Error::NonFinite { row: i, col: x.cols() });
        }
    }
    Ok(())
}

impl ForestModel {
    /// Sample `n_trees` trees on the bounding box of the training rows and
    /// `extra` (typically validation rows), then fit the leaves.
    pub fn train(
        x_train: &Matrix,
        y_train: &[f64],
        extra: Option<&Matrix>,
        n_trees: usize,
        lifetime: f64,
        params: GaussianParams,
        seed: u64,
    ) -> Result<Self> {
        check_data(x_train, y_train)?;
        if n_trees == 0 {
            return Err(Error::InvalidArgument("need at least one tree".into()));
        }
        let bbox = data_box(x_train, extra)?;
        let trees = sample_trees(&bbox, lifetime, n_trees, seed, "forest-tree")?;
        Self::from_trees(trees, params, x_train, y_train, lifetime)
    }

    /// Fit leaf statistics on given trees, using only cuts born at or before
    /// `horizon`.
    pub fn from_trees(
        trees: Vec<MondrianTree>,
        params: GaussianParams,
        x_train: &Matrix,
        y_train: &[f64],
        horizon: f64,
    ) -> Result<Self> {
        check_data(x_train, y_train)?;
        let first = trees
            .first()
            .ok_or_else(|| Error::InvalidArgument("need at least one tree".into()))?;
        let bbox = first.domain().clone();
        let leaf_stats = trees
            .par_iter()
            .map(|tree| {
                let mut acc: HashMap<NodeId, (usize, f64)> = HashMap::new();
                for (i, &y) in y_train.iter().enumerate() {
                    let e = acc.entry(tree.leaf_at(x_train.row(i), horizon)).or_default();
                    e.0 += 1;
                    e.1 += y;
                }
                acc.into_iter()
                    .map(|(leaf, (c, s))| (leaf, LeafStats::new(&params, c, s)))
                    .collect()
            })
            .collect();
        Ok(Self {
            trees,
            params,
            horizon,
            leaf_stats,
            bbox,
        })
    }

    pub fn trees(&self) -> &[MondrianTree] {
        &self.trees
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }

    pub fn bbox(&self) -> &BoundedBox {
        &self.bbox
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Statistics of the non-empty leaves of tree `m`.
    pub fn leaf_stats(&self, m: usize) -> &HashMap<NodeId, LeafStats> {
        &self.leaf_stats[m]
    }

    /// Posterior mean of the leaf of tree `m` containing `x`; the prior mean
    /// for leaves without training points.
    pub fn predict_tree(&self, m: usize, x: &[f64]) -> f64 {
        let leaf = self.trees[m].leaf_at(x, self.horizon);
        self.leaf_stats[m]
            .get(&leaf)
            .map_or(self.params.prior_mean, |s| s.post_mean)
    }

    /// Average of the per-tree leaf posterior means. Points outside the
    /// sampling box are routed as if clamped into it.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let m = self.trees.len();
        (0..m).map(|t| self.predict_tree(t, x)).sum::<f64>() / m as f64
    }

    pub fn predict_rows(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict(x.row(i))).collect()
    }
}

/// Forest prediction after one tree's leaf mean changes from `mu_old` to
/// `mu_new`.
pub fn update_prediction(y_hat: f64, mu_old: f64, mu_new: f64, n_trees: usize) -> f64 {
    y_hat - mu_old / n_trees as f64 + mu_new / n_trees as f64
}

/// MSE over `n` points after one prediction changes from `y_hat_old` to
/// `y_hat_new`.
pub fn update_mse(mse: f64, y_hat_old: f64, y_hat_new: f64, y: f64, n: usize) -> f64 {
    let n = n as f64;
    mse - (y_hat_old - y).powi(2) / n + (y_hat_new - y).powi(2) / n
}

/// Running predictions and MSE for one set of points.
struct Tracked<'a> {
    y: &'a [f64],
    y_hat: Vec<f64>,
    mse: f64,
}

impl<'a> Tracked<'a> {
    fn new(y: &'a [f64], init: f64) -> Self {
        let y_hat = vec![init; y.len()];
        let mse = if y.is_empty() {
            0.0
        } else {
            y.iter().map(|v| (init - v).powi(2)).sum::<f64>() / y.len() as f64
        };
        Self { y, y_hat, mse }
    }

    fn shift(&mut self, rows: &[usize], mu_old: f64, mu_new: f64, n_trees: usize) {
        for &i in rows {
            let new = update_prediction(self.y_hat[i], mu_old, mu_new, n_trees);
            self.mse = update_mse(self.mse, self.y_hat[i], new, self.y[i], self.y.len());
            self.y_hat[i] = new;
        }
    }

    fn rmse(&self) -> f64 {
        self.mse.max(0.0).sqrt()
    }
}

#[derive(Default)]
struct LeafMembers {
    train: Vec<usize>,
    val: Vec<usize>,
}

/// Forward regularization path of a Mondrian forest over the lifetime.
///
/// Predictions start at the prior mean; each tree's root posterior is then
/// folded in to give the lifetime-0 model. Every subsequent cut, in time
/// order, updates only the points of the leaf it splits. Returns one point
/// at lifetime 0 plus one per cut.
pub fn forward_path(
    trees: &[MondrianTree],
    params: &GaussianParams,
    x_train: &Matrix,
    y_train: &[f64],
    x_val: &Matrix,
    y_val: &[f64],
) -> Result<Vec<PathPoint>> {
    check_data(x_train, y_train)?;
    if x_val.rows() != y_val.len() {
        return Err(Error::DimensionMismatch {
            expected: x_val.rows(),
            got: y_val.len(),
        });
    }
    let m = trees.len();
    if m == 0 {
        return Err(Error::InvalidArgument("need at least one tree".into()));
    }
    let mut train = Tracked::new(y_train, params.prior_mean);
    let mut val = Tracked::new(y_val, params.prior_mean);
    let sum_of = |rows: &[usize]| rows.iter().map(|&i| y_train[i]).sum::<f64>();

    let mut members: Vec<HashMap<NodeId, LeafMembers>> = Vec::with_capacity(m);
    for tree in trees {
        let all = LeafMembers {
            train: (0..y_train.len()).collect(),
            val: (0..y_val.len()).collect(),
        };
        let (mu_root, _) = params.posterior(all.train.len(), sum_of(&all.train));
        train.shift(&all.train, params.prior_mean, mu_root, m);
        val.shift(&all.val, params.prior_mean, mu_root, m);
        members.push(HashMap::from([(tree.root(), all)]));
    }

    let mut path = vec![PathPoint {
        lifetime: 0.0,
        rmse_train: train.rmse(),
        rmse_val: val.rmse(),
    }];
    for event in cut_schedule(trees) {
        let tree = &trees[event.tree];
        let cut = tree.node(event.node).cut.as_ref().expect("scheduled node has a cut");
        let parent = members[event.tree].remove(&event.node).unwrap_or_default();
        let mu_parent = params.posterior(parent.train.len(), sum_of(&parent.train)).0;

        let split = |rows: Vec<usize>, x: &Matrix| -> (Vec<usize>, Vec<usize>) {
            rows.into_iter().partition(|&i| x.row(i)[cut.dim] <= cut.loc)
        };
        let (train_l, train_r) = split(parent.train, x_train);
        let (val_l, val_r) = split(parent.val, x_val);

        for (child, tr, va) in [(cut.left, train_l, val_l), (cut.right, train_r, val_r)] {
            let mu_child = params.posterior(tr.len(), sum_of(&tr)).0;
            train.shift(&tr, mu_parent, mu_child, m);
            val.shift(&va, mu_parent, mu_child, m);
            members[event.tree].insert(child, LeafMembers { train: tr, val: va });
        }
        path.push(PathPoint {
            lifetime: event.time,
            rmse_train: train.rmse(),
            rmse_val: val.rmse(),
        });
    }
    Ok(path)
}

/// Train and validation RMSE of a forest fitted from scratch on `trees`
/// truncated at `horizon`.
pub fn evaluate_at(
    trees: &[MondrianTree],
    params: &GaussianParams,
    x_train: &Matrix,
    y_train: &[f64],
    x_val: &Matrix,
    y_val: &[f64],
    horizon: f64,
) -> Result<PathPoint> {
    let model = ForestModel::from_trees(trees.to_vec(), *params, x_train, y_train, horizon)?;
    Ok(PathPoint {
        lifetime: horizon,
        rmse_train: rmse(&model.predict_rows(x_train), y_train),
        rmse_val: rmse(&model.predict_rows(x_val), y_val),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn unit_params() -> GaussianParams {
        GaussianParams::new(0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn posterior_of_no_data_is_prior() {
        let p = GaussianParams::new(1.5, 2.0, 0.3).unwrap();
        assert_eq!(gaussian_posterior(&p, &[]), (1.5, 2.0));
    }

    #[test]
    fn posterior_is_symmetric() {
        let (mean, _) = gaussian_posterior(&unit_params(), &[-1.7, 1.7]);
        assert!(mean.abs() < 1e-15);
    }

    /// Grid quadrature of prior × likelihood for a single observation y = 2.
    #[test]
    fn posterior_matches_quadrature() {
        let (lo, hi, n) = (-12.0, 12.0, 240_001);
        let h = (hi - lo) / (n - 1) as f64;
        let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let mu = lo + k as f64 * h;
            let w = (-0.5 * mu * mu).exp() * (-0.5 * (2.0 - mu) * (2.0 - mu)).exp();
            z += w;
            m1 += w * mu;
            m2 += w * mu * mu;
        }
        let mean_q = m1 / z;
        let var_q = m2 / z - mean_q * mean_q;
        let (mean, var) = gaussian_posterior(&unit_params(), &[2.0]);
        assert!((mean - mean_q).abs() < 1e-6 && (mean - 1.0).abs() < 1e-12);
        assert!((var - var_q).abs() < 1e-6 && (var - 0.5).abs() < 1e-12);
    }

    #[test]
    fn params_reject_nonpositive_variances() {
        assert!(GaussianParams::new(0.0, 0.0, 1.0).is_err());
        assert!(GaussianParams::new(0.0, 1.0, -1.0).is_err());
        assert!(GaussianParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(GaussianParams::new(0.0, f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn update_rules() {
        assert!((update_prediction(1.0, 0.4, 0.6, 2) - 1.1).abs() < 1e-15);
        assert_eq!(update_mse(0.7, 0.3, 0.3, 1.0, 5), 0.7);
        // one point: residual 0.5 → 0.3
        assert!((update_mse(0.25, 1.5, 1.3, 1.0, 1) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn incremental_mse_matches_batch() {
        let mut rng = RngStream::new(3, 0);
        let n = 50;
        let y: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let mut y_hat: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let mut mse = y.iter().zip(&y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        for _ in 0..1000 {
            let i = (rng.uniform() * n as f64) as usize;
            let new = rng.uniform() * 3.0 - 1.0;
            mse = update_mse(mse, y_hat[i], new, y[i], n);
            y_hat[i] = new;
        }
        let batch = y.iter().zip(&y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        assert!((mse - batch).abs() < 1e-10);
    }

    fn toy(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = RngStream::new(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.uniform(), rng.uniform()]).collect();
        let y = rows.iter().map(|r| (6.0 * r[0]).sin() + r[1]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn zero_lifetime_predicts_root_posterior_everywhere() {
        let (x, y) = toy(30, 1);
        let p = unit_params();
        let model = ForestModel::train(&x, &y, None, 3, 0.0, p, 5).unwrap();
        let (mu, _) = gaussian_posterior(&p, &y);
        for pt in [[0.1, 0.2], [0.9, 0.5], [0.5, 0.5]] {
            assert!((model.predict(&pt) - mu).abs() < 1e-12);
        }
    }

    #[test]
    fn vague_prior_recovers_leaf_average() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let p = GaussianParams::new(0.0, 1e12, 1.0).unwrap();
        let model = ForestModel::train(&x, &[1.0, 3.0], None, 1, 0.0, p, 0).unwrap();
        assert!((model.predict(&[0.5]) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn leaf_counts_partition_training_set() {
        let (x, y) = toy(80, 2);
        let model = ForestModel::train(&x, &y, None, 4, 4.0, unit_params(), 9).unwrap();
        for m in 0..4 {
            let total: usize = model.leaf_stats(m).values().map(|s| s.count).sum();
            assert_eq!(total, 80);
        }
    }

    #[test]
    fn forest_average_of_single_trees() {
        let (x, y) = toy(60, 4);
        let model = ForestModel::train(&x, &y, None, 5, 3.0, unit_params(), 1).unwrap();
        let pt = [0.3, 0.8];
        let avg = (0..5).map(|m| model.predict_tree(m, &pt)).sum::<f64>() / 5.0;
        assert!((model.predict(&pt) - avg).abs() < 1e-15);
    }

    #[test]
    fn symmetric_targets_without_cuts_predict_zero() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let model = ForestModel::train(&x, &[-1.0, 1.0, -2.0, 2.0], None, 3, 0.0, unit_params(), 0).unwrap();
        assert!(model.predict(&[1.5]).abs() < 1e-15);
    }

    #[test]
    fn prediction_matches_brute_force() {
        let (x, y) = toy(40, 6);
        let p = GaussianParams::new(0.2, 0.5, 0.3).unwrap();
        let model = ForestModel::train(&x, &y, None, 3, 3.0, p, 2).unwrap();
        let pt = [0.45, 0.55];
        let mut total = 0.0;
        for tree in model.trees() {
            let leaf = tree.leaf_of(&pt);
            let targets: Vec<f64> = (0..x.rows())
                .filter(|&i| tree.leaf_of(x.row(i)) == leaf)
                .map(|i| y[i])
                .collect();
            total += gaussian_posterior(&p, &targets).0;
        }
        assert!((model.predict(&pt) - total / 3.0).abs() < 1e-12);
    }

    #[test]
    fn path_without_cuts_is_single_point() {
        let (x, y) = toy(20, 7);
        let bbox = data_box(&x, None).unwrap();
        let trees = vec![MondrianTree::leaf(bbox.clone(), 0.0), MondrianTree::leaf(bbox, 0.0)];
        let path = forward_path(&trees, &unit_params(), &x, &y, &x, &y).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path[0].lifetime, 0.0);
    }

    #[test]
    fn path_matches_retraining() {
        let (x, y) = toy(120, 8);
        let (xv, yv) = toy(40, 9);
        let bbox = data_box(&x, Some(&xv)).unwrap();
        let trees = sample_trees(&bbox, 6.0, 4, 3, "t").unwrap();
        let p = GaussianParams::from_targets(&y).unwrap();
        let path = forward_path(&trees, &p, &x, &y, &xv, &yv).unwrap();
        assert_eq!(path.len(), 1 + trees.iter().map(|t| t.num_cuts()).sum::<usize>());
        for pt in &path {
            let fresh = evaluate_at(&trees, &p, &x, &y, &xv, &yv, pt.lifetime).unwrap();
            assert!((pt.rmse_train - fresh.rmse_train).abs() <= 1e-9 * fresh.rmse_train);
            assert!((pt.rmse_val - fresh.rmse_val).abs() <= 1e-9 * fresh.rmse_val);
        }
    }

    #[test]
    fn rejects_bad_training_data() {
        let x = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(matches!(
            ForestModel::train(&x, &[1.0], None, 1, 1.0, unit_params(), 0),
            Err(Error::NonFinite { .. })
        ));
        let x = Matrix::zeros(0, 1);
        assert!(matches!(
            ForestModel::train(&x, &[], None, 1, 1.0, unit_params(), 0),
            Err(Error::EmptyData)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn predictions_stay_within_prior_and_targets(seed in any::<u64>(), mean in -3.0f64..3.0) {
            let (x, y) = toy(25, seed);
            let p = GaussianParams::new(mean, 0.7, 0.4).unwrap();
            let model = ForestModel::train(&x, &y, None, 3, 5.0, p, seed).unwrap();
            let lo = y.iter().cloned().fold(mean, f64::min);
            let hi = y.iter().cloned().fold(mean, f64::max);
            let mut rng = RngStream::new(seed, 1);
            for _ in 0..20 {
                let v = model.predict(&[rng.uniform(), rng.uniform()]);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }
}
