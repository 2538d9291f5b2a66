use serde::{Deserialize, Serialize};

use super::{Cut, MondrianNode, MondrianTree};
use crate::error::{Error, Result};
use crate::geometry::BoundedBox;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub birth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<usize>,
    #[serde(rename = "box")]
    pub bbox: BoxRecord,
}

/// Serialized form of a [`MondrianTree`]. Floats are written in
/// shortest-round-trip decimal, so decoding is lossless.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub lifetime: f64,
    pub root: usize,
    pub nodes: Vec<NodeRecord>,
}

impl From<&MondrianTree> for TreeDocument {
    fn from(tree: &MondrianTree) -> Self {
        let nodes = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(id, n)| NodeRecord {
                id,
                birth: n.birth_time,
                cut_time: n.cut.as_ref().map(|c| c.time),
                dim: n.cut.as_ref().map(|c| c.dim),
                loc: n.cut.as_ref().map(|c| c.loc),
                left: n.cut.as_ref().map(|c| c.left),
                right: n.cut.as_ref().map(|c| c.right),
                bbox: BoxRecord {
                    lower: n.bbox.lower().to_vec(),
                    upper: n.bbox.upper().to_vec(),
                },
            })
            .collect();
        Self {
            lifetime: tree.lifetime(),
            root: tree.root(),
            nodes,
        }
    }
}

impl TryFrom<TreeDocument> for MondrianTree {
    type Error = Error;

    fn try_from(doc: TreeDocument) -> Result<Self> {
        let mut nodes: Vec<MondrianNode> = Vec::with_capacity(doc.nodes.len());
        for (i, rec) in doc.nodes.iter().enumerate() {
            if rec.id != i {
                return Err(Error::MalformedTree(format!("node {i} has id {}", rec.id)));
            }
            let cut = match (rec.cut_time, rec.dim, rec.loc, rec.left, rec.right) {
                (None, None, None, None, None) => None,
                (Some(time), Some(dim), Some(loc), Some(left), Some(right)) => Some(Cut {
                    time,
                    dim,
                    loc,
                    left,
                    right,
                }),
                _ => {
                    return Err(Error::MalformedTree(format!(
                        "node {i} has a partial set of cut fields"
                    )))
                }
            };
            nodes.push(MondrianNode {
                bbox: BoundedBox::new(rec.bbox.lower.clone(), rec.bbox.upper.clone())?,
                birth_time: rec.birth,
                parent: None,
                cut,
            });
        }
        for i in 0..nodes.len() {
            if let Some(c) = nodes[i].cut.clone() {
                for child in [c.left, c.right] {
                    if child >= nodes.len() {
                        return Err(Error::MalformedTree(format!("child {child} out of range")));
                    }
                    nodes[child].parent = Some(i);
                }
            }
        }
        let tree = MondrianTree {
            nodes,
            root: doc.root,
            lifetime: doc.lifetime,
        };
        tree.validate()?;
        Ok(tree)
    }
}

impl MondrianTree {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&TreeDocument::from(self)).expect("tree documents always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: TreeDocument =
            serde_json::from_str(s).map_err(|e| Error::MalformedTree(e.to_string()))?;
        doc.try_into()
    }
}
