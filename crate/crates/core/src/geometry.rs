use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]` in `R^D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundedBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidBox("box must have at least one dimension".into()));
        }
        for (d, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBox(format!("non-finite bound in dimension {d}")));
            }
            if lo > hi {
                return Err(Error::InvalidBox(format!(
                    "lower {lo} exceeds upper {hi} in dimension {d}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// Smallest box containing every point.
    pub fn from_points<'a, I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = points.into_iter();
        let first = iter.next().ok_or(Error::EmptyData)?;
        let mut lower = first.to_vec();
        let mut upper = first.to_vec();
        for p in iter {
            if p.len() != lower.len() {
                return Err(Error::DimensionMismatch {
                    expected: lower.len(),
                    got: p.len(),
                });
            }
            for d in 0..p.len() {
                lower[d] = lower[d].min(p[d]);
                upper[d] = upper[d].max(p[d]);
            }
        }
        Self::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    /// Sum of side lengths, the rate of the first-cut clock.
    pub fn linear_dimension(&self) -> f64 {
        (0..self.dim()).map(|d| self.side(d)).sum()
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .enumerate()
                .all(|(d, &x)| x >= self.lower[d] && x <= self.upper[d])
    }

    pub fn contains_box(&self, other: &BoundedBox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|d| other.lower[d] >= self.lower[d] && other.upper[d] <= self.upper[d])
    }

    /// Coordinate-wise clamp into the box; the flag reports whether any
    /// coordinate moved.
    pub fn clamp(&self, p: &[f64]) -> (Vec<f64>, bool) {
        let mut moved = false;
        let out = p
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                let c = x.clamp(self.lower[d], self.upper[d]);
                moved |= c != x;
                c
            })
            .collect();
        (out, moved)
    }

    /// Expand every side by `rel` times its length (or by `rel` in absolute
    /// terms when the side has zero length).
    pub fn padded(&self, rel: f64) -> Self {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        for d in 0..self.dim() {
            let side = self.side(d);
            let pad = if side > 0.0 { rel * side } else { rel };
            lower[d] -= pad;
            upper[d] += pad;
        }
        Self { lower, upper }
    }

    /// Split along `dim` at `loc` into the `≤ loc` and `≥ loc` halves.
    pub fn split(&self, dim: usize, loc: f64) -> (Self, Self) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[dim] = loc;
        right.lower[dim] = loc;
        (left, right)
    }
}
