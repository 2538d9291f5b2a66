use rand::distr::Distribution;
use rand_distr::Poisson;
use rayon::prelude::*;

use super::{MondrianTree, NodeId};
use crate::error::{Error, Result};
use crate::geometry::BoundedBox;
use crate::rng::RngStream;

/// `Exp(rate)` by inverse CDF.
pub fn sample_exp(rate: f64, rng: &mut RngStream) -> Result<f64> {
    rng.exp(rate)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstCut {
    /// Waiting time from the box's birth until its first cut.
    pub delta_t: f64,
    pub dim: usize,
    pub loc: f64,
}

/// Time, dimension and location of the first cut in `bbox`.
///
/// The dimension is chosen with probability proportional to side length by
/// scanning cumulative side lengths in ascending dimension order.
pub fn sample_first_cut(bbox: &BoundedBox, rng: &mut RngStream) -> Result<FirstCut> {
    let ld = bbox.linear_dimension();
    if !(ld > 0.0) {
        return Err(Error::DegenerateBox);
    }
    let delta_t = rng.exp(ld)?;
    let dim = pick_weighted((0..bbox.dim()).map(|d| bbox.side(d)), ld, rng);
    let loc = rng.uniform_open(bbox.lower()[dim], bbox.upper()[dim]);
    Ok(FirstCut { delta_t, dim, loc })
}

/// Index of the first bucket whose cumulative weight exceeds `u * total`.
/// Zero-weight buckets are never returned.
pub(crate) fn pick_weighted<I>(weights: I, total: f64, rng: &mut RngStream) -> usize
where
    I: IntoIterator<Item = f64>,
{
    let target = rng.uniform() * total;
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (d, w) in weights.into_iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last_positive = d;
        cum += w;
        if cum > target {
            return d;
        }
    }
    // rounding left `target` just above the accumulated sum
    last_positive
}

/// Sample `MP(lifetime, bbox)`.
pub fn sample_mondrian(bbox: &BoundedBox, lifetime: f64, rng: &mut RngStream) -> Result<MondrianTree> {
    if !(lifetime >= 0.0) || !lifetime.is_finite() {
        return Err(Error::InvalidLifetime(lifetime));
    }
    if !(bbox.linear_dimension() > 0.0) {
        return Err(Error::DegenerateBox);
    }
    let mut tree = MondrianTree::leaf(bbox.clone(), lifetime);
    let root = tree.root();
    grow(&mut tree, root, rng)?;
    Ok(tree)
}

/// Grow the subtree rooted at leaf `start` until the tree's lifetime,
/// starting the clock at the leaf's birth time.
pub(crate) fn grow(tree: &mut MondrianTree, start: NodeId, rng: &mut RngStream) -> Result<()> {
    let lifetime = tree.lifetime();
    let mut stack = vec![start];
    while let Some(id) = stack.pop() {
        let node = tree.node(id);
        if !(node.bbox.linear_dimension() > 0.0) {
            continue;
        }
        let cut = sample_first_cut(&node.bbox, rng)?;
        let time = node.birth_time + cut.delta_t;
        if time > lifetime {
            continue;
        }
        let (l, r) = tree.split_leaf(id, time, cut.dim, cut.loc);
        tree.check_size()?;
        stack.push(r);
        stack.push(l);
    }
    Ok(())
}

/// Cut locations of a one-dimensional Mondrian on `[a, b]`, sampled as a
/// Poisson point process: `N ~ Poisson(lifetime (b - a))` followed by `N`
/// sorted uniform locations.
pub fn cuts_1d(a: f64, b: f64, lifetime: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidBox(format!("need a < b, got [{a}, {b}]")));
    }
    if !(lifetime >= 0.0) || !lifetime.is_finite() {
        return Err(Error::InvalidLifetime(lifetime));
    }
    let mean = lifetime * (b - a);
    let n = if mean > 0.0 {
        let poisson = Poisson::new(mean).map_err(|_| Error::InvalidRate(mean))?;
        poisson.sample(rng) as usize
    } else {
        0
    };
    let mut locs: Vec<f64> = (0..n).map(|_| rng.uniform_open(a, b)).collect();
    locs.sort_by(f64::total_cmp);
    Ok(locs)
}

/// `count` independent trees on `bbox`, tree `m` drawn from stream
/// `(seed, component, m)`. Sampling runs in parallel; output is independent
/// of thread count.
pub fn sample_trees(
    bbox: &BoundedBox,
    lifetime: f64,
    count: usize,
    seed: u64,
    component: &str,
) -> Result<Vec<MondrianTree>> {
    (0..count)
        .into_par_iter()
        .map(|m| {
            let mut rng = RngStream::derive(seed, component, m as u64);
            sample_mondrian(bbox, lifetime, &mut rng)
        })
        .collect()
}
