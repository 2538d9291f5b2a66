//! Mondrian processes on bounded boxes.
//!
//! A [`MondrianTree`] is a guillotine partition of a box stored as a node
//! arena. Every internal node carries the time, dimension and location of
//! its cut; a cut's children are born at the cut time. Sampling, restriction
//! and conditional extension all operate on this one representation.

mod conditional;
mod json;
mod sample;

pub use conditional::{extend_conditional, restrict};
pub use json::TreeDocument;
pub use sample::{
    cuts_1d, sample_exp, sample_first_cut, sample_mondrian, sample_trees, FirstCut,
};

use crate::error::{Error, Result};
use crate::geometry::BoundedBox;

pub type NodeId = usize;

/// Upper bound on nodes in a single tree before sampling aborts.
pub const MAX_NODES: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub time: f64,
    pub dim: usize,
    pub loc: f64,
    pub left: NodeId,
    pub right: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MondrianNode {
    pub bbox: BoundedBox,
    pub birth_time: f64,
    pub parent: Option<NodeId>,
    pub cut: Option<Cut>,
}

impl MondrianNode {
    pub fn is_leaf(&self) -> bool {
        self.cut.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MondrianTree {
    nodes: Vec<MondrianNode>,
    root: NodeId,
    lifetime: f64,
}

impl MondrianTree {
    /// A tree consisting of a single leaf covering `bbox`.
    pub fn leaf(bbox: BoundedBox, lifetime: f64) -> Self {
        Self {
            nodes: vec![MondrianNode {
                bbox,
                birth_time: 0.0,
                parent: None,
                cut: None,
            }],
            root: 0,
            lifetime,
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn domain(&self) -> &BoundedBox {
        &self.nodes[self.root].bbox
    }

    pub fn lifetime(&self) -> f64 {
        self.lifetime
    }

    pub fn node(&self, id: NodeId) -> &MondrianNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[MondrianNode] {
        &self.nodes
    }

    pub fn num_cuts(&self) -> usize {
        self.nodes.iter().filter(|n| n.cut.is_some()).count()
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    /// Internal nodes with their cuts, in arena order.
    pub fn cuts(&self) -> impl Iterator<Item = (NodeId, &Cut)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.cut.as_ref().map(|c| (i, c)))
    }

    /// Leaf containing `point`. Points on a cut go to the `≤` child; points
    /// outside the domain land in the same leaf as their clamped image.
    pub fn leaf_of(&self, point: &[f64]) -> NodeId {
        self.leaf_at(point, f64::INFINITY)
    }

    /// Leaf containing `point` in the partition at time `t`, i.e. using only
    /// cuts with `time ≤ t`.
    pub fn leaf_at(&self, point: &[f64], t: f64) -> NodeId {
        let mut id = self.root;
        while let Some(cut) = &self.nodes[id].cut {
            if cut.time > t {
                break;
            }
            id = if point[cut.dim] <= cut.loc {
                cut.left
            } else {
                cut.right
            };
        }
        id
    }

    /// The tree with every cut born after `t` removed, relabelled compactly.
    pub fn truncated(&self, t: f64) -> Self {
        let mut out = Self::leaf(self.domain().clone(), t.min(self.lifetime));
        out.nodes[0].birth_time = self.nodes[self.root].birth_time;
        let mut stack = vec![(self.root, 0)];
        while let Some((src, dst)) = stack.pop() {
            if let Some(cut) = &self.nodes[src].cut {
                if cut.time <= t {
                    let (l, r) = out.split_leaf(dst, cut.time, cut.dim, cut.loc);
                    stack.push((cut.right, r));
                    stack.push((cut.left, l));
                }
            }
        }
        out
    }

    /// Turn leaf `id` into an internal node, returning the new children.
    pub(crate) fn split_leaf(&mut self, id: NodeId, time: f64, dim: usize, loc: f64) -> (NodeId, NodeId) {
        debug_assert!(self.nodes[id].is_leaf());
        let (lb, rb) = self.nodes[id].bbox.split(dim, loc);
        let left = self.push_node(lb, time, Some(id));
        let right = self.push_node(rb, time, Some(id));
        self.nodes[id].cut = Some(Cut {
            time,
            dim,
            loc,
            left,
            right,
        });
        (left, right)
    }

    pub(crate) fn push_node(&mut self, bbox: BoundedBox, birth_time: f64, parent: Option<NodeId>) -> NodeId {
        self.nodes.push(MondrianNode {
            bbox,
            birth_time,
            parent,
            cut: None,
        });
        self.nodes.len() - 1
    }

    pub(crate) fn check_size(&self) -> Result<()> {
        if self.nodes.len() > MAX_NODES {
            Err(Error::Explosion(MAX_NODES))
        } else {
            Ok(())
        }
    }

    /// Verify the structural invariants of a guillotine partition.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedTree(msg));
        if self.root >= self.nodes.len() {
            return bad("root out of range".into());
        }
        if !(self.lifetime >= 0.0) {
            return bad(format!("lifetime {}", self.lifetime));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                return bad(format!("node {id} reachable twice"));
            }
            let node = &self.nodes[id];
            let Some(cut) = &node.cut else { continue };
            if cut.left >= self.nodes.len() || cut.right >= self.nodes.len() {
                return bad(format!("node {id} has a child out of range"));
            }
            if cut.dim >= node.bbox.dim() {
                return bad(format!("node {id} cuts dimension {}", cut.dim));
            }
            let (lo, hi) = (node.bbox.lower()[cut.dim], node.bbox.upper()[cut.dim]);
            if !(cut.loc > lo && cut.loc < hi) {
                return bad(format!("node {id} cut {} outside ({lo}, {hi})", cut.loc));
            }
            if !(cut.time > node.birth_time) || cut.time > self.lifetime {
                return bad(format!("node {id} cut time {} out of order", cut.time));
            }
            let (lb, rb) = node.bbox.split(cut.dim, cut.loc);
            for (child, expect) in [(cut.left, lb), (cut.right, rb)] {
                let c = &self.nodes[child];
                if c.bbox != expect || c.birth_time != cut.time || c.parent != Some(id) {
                    return bad(format!("child {child} of node {id} inconsistent"));
                }
                stack.push(child);
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }
}

/// One cut of one tree in a forest, ordered by time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutEvent {
    pub time: f64,
    pub tree: usize,
    pub node: NodeId,
}

/// All cuts of all trees, sorted ascending by time (ties by tree, then node).
pub fn cut_schedule(trees: &[MondrianTree]) -> Vec<CutEvent> {
    let mut events: Vec<CutEvent> = trees
        .iter()
        .enumerate()
        .flat_map(|(tree, t)| {
            t.cuts().map(move |(node, c)| CutEvent {
                time: c.time,
                tree,
                node,
            })
        })
        .collect();
    events.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.tree.cmp(&b.tree))
            .then(a.node.cmp(&b.node))
    });
    events
}
