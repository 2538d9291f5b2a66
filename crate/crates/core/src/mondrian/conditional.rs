//! Restriction to sub-boxes and conditional extension to super-boxes.

use super::sample::{grow, pick_weighted};
use super::{MondrianTree, NodeId};
use crate::error::{Error, Result};
use crate::geometry::BoundedBox;
use crate::rng::RngStream;

/// Restriction of `tree` to the sub-box `sub`.
///
/// Cuts whose hyperplane misses the current restricted box are skipped and
/// the child containing the box is spliced in their place. Surviving cuts
/// keep their times, so the result has the law of a Mondrian on `sub`.
pub fn restrict(tree: &MondrianTree, sub: &BoundedBox) -> Result<MondrianTree> {
    if !tree.domain().contains_box(sub) {
        return Err(Error::NotContained);
    }
    let mut out = MondrianTree::leaf(sub.clone(), tree.lifetime());
    out.nodes[0].birth_time = tree.node(tree.root()).birth_time;
    let mut stack: Vec<(NodeId, NodeId)> = vec![(tree.root(), out.root())];
    while let Some((src, dst)) = stack.pop() {
        let Some(cut) = &tree.node(src).cut else { continue };
        let region = &out.node(dst).bbox;
        let (lo, hi) = (region.lower()[cut.dim], region.upper()[cut.dim]);
        if cut.loc > lo && cut.loc < hi {
            let (l, r) = out.split_leaf(dst, cut.time, cut.dim, cut.loc);
            stack.push((cut.right, r));
            stack.push((cut.left, l));
        } else if cut.loc >= hi {
            stack.push((cut.left, dst));
        } else {
            stack.push((cut.right, dst));
        }
    }
    Ok(out)
}

enum Pending {
    /// Grow `dst` conditionally on the restriction `src` of the given tree.
    Conditional { dst: NodeId, src: NodeId },
    /// Grow `dst` with no conditioning.
    Free { dst: NodeId },
}

/// Extend a Mondrian sampled on `Φ = tree.domain()` to `target ⊇ Φ`.
///
/// At each step the first cut of the current super-box either is the first
/// cut of the current sub-box (when a clock with rate
/// `LD(super) - LD(sub)` has not rung by then) or misses the sub-box at a
/// truncated-exponential time and a location uniform over the segments that
/// avoid it. A sub-box without cuts is treated as having its first cut at
/// the lifetime. The output restricted to `Φ` equals the input exactly and
/// its marginal law is `MP(Λ, target)`.
pub fn extend_conditional(
    tree: &MondrianTree,
    target: &BoundedBox,
    rng: &mut RngStream,
) -> Result<MondrianTree> {
    if !target.contains_box(tree.domain()) {
        return Err(Error::NotContained);
    }
    let lifetime = tree.lifetime();
    let mut out = MondrianTree::leaf(target.clone(), lifetime);
    out.nodes[0].birth_time = tree.node(tree.root()).birth_time;

    let mut stack = vec![Pending::Conditional {
        dst: out.root(),
        src: tree.root(),
    }];
    while let Some(item) = stack.pop() {
        match item {
            Pending::Free { dst } => grow(&mut out, dst, rng)?,
            Pending::Conditional { dst, src } => {
                let outer = out.node(dst).bbox.clone();
                let inner = &tree.node(src).bbox;
                let born = out.node(dst).birth_time;
                let next_inner = tree.node(src).cut.as_ref().map_or(lifetime, |c| c.time);

                let gap_rate = (outer.linear_dimension() - inner.linear_dimension()).max(0.0);
                let miss_time = if gap_rate > 0.0 {
                    born + rng.exp(gap_rate)?
                } else {
                    f64::INFINITY
                };

                if miss_time < next_inner {
                    // the first cut of `outer` avoids `inner`
                    let (dim, loc) = cut_outside(&outer, inner, gap_rate, rng);
                    let (l, r) = out.split_leaf(dst, miss_time, dim, loc);
                    let (inner_side, free_side) = if loc <= inner.lower()[dim] { (r, l) } else { (l, r) };
                    stack.push(Pending::Free { dst: free_side });
                    stack.push(Pending::Conditional {
                        dst: inner_side,
                        src,
                    });
                } else if let Some(cut) = &tree.node(src).cut {
                    // the sub-box's first cut extends through `outer`
                    let (l, r) = out.split_leaf(dst, cut.time, cut.dim, cut.loc);
                    stack.push(Pending::Conditional {
                        dst: r,
                        src: cut.right,
                    });
                    stack.push(Pending::Conditional {
                        dst: l,
                        src: cut.left,
                    });
                }
                out.check_size()?;
            }
        }
    }
    Ok(out)
}

/// Dimension and location of a cut through `outer` that misses `inner`,
/// uniform over the segments `[outer.lo, inner.lo) ∪ (inner.hi, outer.hi]`.
fn cut_outside(outer: &BoundedBox, inner: &BoundedBox, total: f64, rng: &mut RngStream) -> (usize, f64) {
    let weights = (0..outer.dim()).map(|d| outer.side(d) - inner.side(d));
    let dim = pick_weighted(weights, total, rng);
    let below = inner.lower()[dim] - outer.lower()[dim];
    let above = outer.upper()[dim] - inner.upper()[dim];
    loop {
        let u = rng.uniform() * (below + above);
        let loc = if u < below {
            outer.lower()[dim] + u
        } else {
            inner.upper()[dim] + (u - below)
        };
        if loc > outer.lower()[dim] && loc < outer.upper()[dim] {
            return (dim, loc);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mondrian::sample_mondrian;

    #[test]
    fn identity_restriction_preserves_structure() {
        let mut rng = RngStream::new(4, 0);
        for _ in 0..20 {
            let t = sample_mondrian(&BoundedBox::unit(2), 3.0, &mut rng).unwrap();
            let r = restrict(&t, t.domain()).unwrap();
            assert_eq!(r.num_cuts(), t.num_cuts());
            r.validate().unwrap();
            let mut a: Vec<_> = t.cuts().map(|(_, c)| (c.time, c.dim, c.loc)).collect();
            let mut b: Vec<_> = r.cuts().map(|(_, c)| (c.time, c.dim, c.loc)).collect();
            a.sort_by(|x, y| x.0.total_cmp(&y.0));
            b.sort_by(|x, y| x.0.total_cmp(&y.0));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn slice_restriction_has_no_cuts_in_flat_dimension() {
        let mut rng = RngStream::new(9, 0);
        let slice = BoundedBox::new(vec![0.4, 0.0], vec![0.4, 1.0]).unwrap();
        for _ in 0..50 {
            let t = sample_mondrian(&BoundedBox::unit(2), 4.0, &mut rng).unwrap();
            let r = restrict(&t, &slice).unwrap();
            assert!(r.cuts().all(|(_, c)| c.dim == 1));
        }
    }

    #[test]
    fn restriction_requires_containment() {
        let t = MondrianTree::leaf(BoundedBox::unit(2), 1.0);
        let big = BoundedBox::new(vec![-1.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(restrict(&t, &big), Err(Error::NotContained));
    }

    #[test]
    fn extension_to_same_box_is_identity() {
        let mut rng = RngStream::new(2, 0);
        let t = sample_mondrian(&BoundedBox::unit(2), 2.0, &mut rng).unwrap();
        let e = extend_conditional(&t, t.domain(), &mut rng).unwrap();
        assert_eq!(e.num_cuts(), t.num_cuts());
        e.validate().unwrap();
    }

    #[test]
    fn extension_restricts_back_to_input() {
        let phi = BoundedBox::new(vec![0.25, 0.25], vec![0.75, 0.75]).unwrap();
        let theta = BoundedBox::unit(2);
        let mut rng = RngStream::new(12, 0);
        for _ in 0..50 {
            let t = sample_mondrian(&phi, 3.0, &mut rng).unwrap();
            let e = extend_conditional(&t, &theta, &mut rng).unwrap();
            e.validate().unwrap();
            let back = restrict(&e, &phi).unwrap();
            let key = |tr: &MondrianTree| {
                let mut v: Vec<_> = tr.cuts().map(|(_, c)| (c.time, c.dim, c.loc)).collect();
                v.sort_by(|x, y| x.0.total_cmp(&y.0));
                v
            };
            assert_eq!(key(&back), key(&t));
        }
    }

    #[test]
    fn extension_requires_superset() {
        let t = MondrianTree::leaf(BoundedBox::unit(2), 1.0);
        let small = BoundedBox::new(vec![0.0, 0.0], vec![0.5, 0.5]).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert_eq!(extend_conditional(&t, &small, &mut rng), Err(Error::NotContained));
    }

    /// Gap rate 1 (Φ = [0,1] inside Θ = [0,2]) with the first Φ-cut at 0.7:
    /// the Φ-cut survives as Θ's first cut with probability e^{-0.7}.
    #[test]
    fn extension_probability_matches_survival() {
        let mut t = MondrianTree::leaf(BoundedBox::unit(1), 1.0);
        t.split_leaf(0, 0.7, 0, 0.5);
        let theta = BoundedBox::new(vec![0.0], vec![2.0]).unwrap();
        let mut rng = RngStream::new(21, 0);
        let n = 100_000;
        let kept = (0..n)
            .filter(|_| {
                let e = extend_conditional(&t, &theta, &mut rng).unwrap();
                e.node(e.root()).cut.as_ref().unwrap().time == 0.7
            })
            .count();
        let p = (-0.7f64).exp();
        let f = kept as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() < 3.0 * se, "{f} vs {p}");
    }
}
