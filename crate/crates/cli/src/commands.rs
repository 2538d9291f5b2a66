//! The experiments behind each subcommand, as plain functions over a
//! [`Dataset`].

use mondrian::forest::{data_box, forward_path, ForestModel, GaussianParams};
use mondrian::grid::{init_grid, run_search, select_features, LifetimeConfig, Optimizer, TraceStep, DEFAULT_EPS};
use mondrian::kernel_approx::{backward_path, dual_rmse, KernelPathPoint};
use mondrian::linalg::{laplace_cross, laplace_gram, KernelRidge};
use mondrian::mondrian::{sample_mondrian, sample_trees};
use mondrian::verify::{run_suite, TestReport};
use mondrian::{BoundedBox, MondrianTree, PathPoint, RngStream};
use serde::{Deserialize, Serialize};

use crate::dataset::{split_rows, Dataset, SplitSpec};
use crate::error::{CliError, CliResult};

/// Stream component for forest and kernel-path trees, so both paths run on
/// the same trees for the same seed.
pub const TREE_STREAM: &str = "forest-tree";

fn check_trees(n_trees: usize) -> CliResult<()> {
    if n_trees == 0 {
        return Err(CliError::Validation("--trees must be at least 1".into()));
    }
    Ok(())
}

/// Parse `lo:hi,lo:hi,...` into a box.
pub fn parse_box(spec: &str) -> CliResult<BoundedBox> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for part in spec.split(',') {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| CliError::Validation(format!("box side {part:?} is not of the form lo:hi")))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Validation(format!("box bound {s:?} is not a number")))
        };
        lower.push(num(lo)?);
        upper.push(num(hi)?);
    }
    Ok(BoundedBox::new(lower, upper)?)
}

/// One Mondrian sample on `bbox`.
pub fn sample(bbox: &BoundedBox, lifetime: f64, seed: u64) -> CliResult<MondrianTree> {
    let mut rng = RngStream::derive(seed, "sample", 0);
    Ok(sample_mondrian(bbox, lifetime, &mut rng)?)
}

/// Forward forest path. `params` defaults to [`GaussianParams::from_targets`]
/// on the training targets.
pub fn forest_path(
    data: &Dataset,
    split: &SplitSpec,
    n_trees: usize,
    lifetime: f64,
    params: Option<GaussianParams>,
    seed: u64,
) -> CliResult<Vec<PathPoint>> {
    check_trees(n_trees)?;
    let is_train = split.assign(data.len())?;
    let (xt, yt, xv, yv) = split_rows(data, &is_train);
    let params = match params {
        Some(p) => p,
        None => GaussianParams::from_targets(&yt)?,
    };
    let bbox = data_box(&xt, Some(&xv))?;
    let trees = sample_trees(&bbox, lifetime, n_trees, seed, TREE_STREAM)?;
    Ok(forward_path(&trees, &params, &xt, &yt, &xv, &yv)?)
}

/// Backward kernel-approximation path.
pub fn kernel_path(
    data: &Dataset,
    split: &SplitSpec,
    n_trees: usize,
    lifetime: f64,
    delta: f64,
    seed: u64,
) -> CliResult<Vec<KernelPathPoint>> {
    check_trees(n_trees)?;
    let is_train = split.assign(data.len())?;
    let bbox = data_box(&data.x, None)?;
    let trees = sample_trees(&bbox, lifetime, n_trees, seed, TREE_STREAM)?;
    Ok(backward_path(trees, &data.x, &data.y, &is_train, delta)?)
}

/// Outcome of a grid search: the committed moves and the dimensions whose
/// final lifetime exceeds the selection threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSearch {
    pub trace: Vec<TraceStep>,
    pub selected: Vec<usize>,
}

/// Greedy lifetime search on a Mondrian grid, starting from all-zero
/// lifetimes.
pub fn grid_search(
    data: &Dataset,
    split: &SplitSpec,
    n_grids: usize,
    optimizer: Optimizer,
    budget: usize,
    delta: f64,
    seed: u64,
) -> CliResult<GridSearch> {
    check_trees(n_grids)?;
    let is_train = split.assign(data.len())?;
    let start = LifetimeConfig::zeros(data.dim());
    let mut state = init_grid(&data.x, &data.y, &is_train, n_grids, &start, delta, seed)?;
    let trace = run_search(&mut state, optimizer, budget)?;
    let final_config = LifetimeConfig::new(state.lambdas().to_vec())?;
    let selected = select_features(&final_config, DEFAULT_EPS)?.into_iter().collect();
    Ok(GridSearch { trace, selected })
}

/// One row of an approximate-versus-exact comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub lifetime: f64,
    pub trees: usize,
    pub rmse_approx: f64,
    pub rmse_exact: f64,
}

/// Validation RMSE of Mondrian-kernel ridge regression with `M` trees
/// against exact Laplace-kernel ridge regression, for every lifetime and
/// every `M`. Forests for smaller `M` are prefixes of the largest one, and
/// forests for smaller lifetimes are truncations of a single sample.
pub fn compare_exact(
    data: &Dataset,
    split: &SplitSpec,
    lifetimes: &[f64],
    delta: f64,
    tree_counts: &[usize],
    seed: u64,
) -> CliResult<Vec<CompareRow>> {
    if lifetimes.is_empty() || tree_counts.is_empty() {
        return Err(CliError::Validation("need at least one lifetime and one tree count".into()));
    }
    for &m in tree_counts {
        check_trees(m)?;
    }
    let is_train = split.assign(data.len())?;
    let (xt, yt, xv, yv) = split_rows(data, &is_train);
    let bbox = data_box(&data.x, None)?;
    let horizon = lifetimes.iter().copied().fold(0.0, f64::max);
    let max_m = tree_counts.iter().copied().max().unwrap_or(1);
    let forest = sample_trees(&bbox, horizon, max_m, seed, "compare-tree")?;
    let mut rows = Vec::with_capacity(lifetimes.len() * tree_counts.len());
    for &lambda in lifetimes {
        let rates = vec![lambda; data.dim()];
        let ridge = KernelRidge::fit(&laplace_gram(&xt, &rates)?, &yt, delta)?;
        let cross = laplace_cross(&xv, &xt, &rates)?;
        let pred: Vec<f64> = (0..xv.rows()).map(|i| ridge.predict(cross.row(i))).collect();
        let rmse_exact = rmse(&pred, &yv);
        let truncated: Vec<MondrianTree> = forest.iter().map(|t| t.truncated(lambda)).collect();
        for &m in tree_counts {
            rows.push(CompareRow {
                lifetime: lambda,
                trees: m,
                rmse_approx: dual_rmse(&truncated[..m], &xt, &yt, &xv, &yv, delta)?,
                rmse_exact,
            });
        }
    }
    Ok(rows)
}

fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    let mse = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64;
    mse.sqrt()
}

/// Run a verification suite. Returns the reports even when some fail; the
/// caller decides the exit code.
pub fn verify(suite: &str, seed: u64, alpha: f64) -> CliResult<Vec<TestReport>> {
    Ok(run_suite(suite, seed, alpha)?)
}

/// Forest predictions for query points, with the number of query points that
/// fell outside the training box and were routed as their clamped image.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub values: Vec<f64>,
    pub clamped: usize,
}

/// Train a forest on every row of `data` and predict `query`.
pub fn predict(
    data: &Dataset,
    query: &mondrian::Matrix,
    n_trees: usize,
    lifetime: f64,
    params: Option<GaussianParams>,
    seed: u64,
) -> CliResult<Predictions> {
    check_trees(n_trees)?;
    if query.cols() != data.dim() {
        return Err(CliError::Validation(format!(
            "query has {} columns, training data has {} features",
            query.cols(),
            data.dim()
        )));
    }
    let params = match params {
        Some(p) => p,
        None => GaussianParams::from_targets(&data.y)?,
    };
    let model = ForestModel::train(&data.x, &data.y, None, n_trees, lifetime, params, seed)?;
    let clamped = (0..query.rows())
        .filter(|&i| !model.bbox().contains_point(query.row(i)))
        .count();
    Ok(Predictions {
        values: model.predict_rows(query),
        clamped,
    })
}
