//! Dense matrices, ridge solvers, and the three incremental inverse updates
//! (rank-1 update, row/column deletion, row/column extension).
//!
//! The general Woodbury identity with a `k > 1` block is not implemented;
//! every update the path algorithms need is one of the three specialized
//! forms below, each costing `O(C^2)` for a `C × C` inverse.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominators below this magnitude are treated as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Number of incremental updates between full refactorizations.
pub const REFRESH_INTERVAL: usize = 512;

/// Row-major dense matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Matrix with only the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "matvec dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `vᵀ A` as a vector.
    pub fn vecmat(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows, "vecmat dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &a) in v.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, &b) in out.iter_mut().zip(self.row(i)) {
                *o += a * b;
            }
        }
        out
    }

    /// `AᵀA`.
    pub fn gram(&self) -> Self {
        let mut g = Self::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for (i, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (j, &b) in row.iter().enumerate() {
                    g.data[i * self.cols + j] += a * b;
                }
            }
        }
        g
    }

    /// `A + s I`.
    pub fn add_diagonal(&self, s: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += s;
        }
        m
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    /// Replace `A` by `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    /// Largest relative asymmetry `|a_ij - a_ji| / max|a|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / scale
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::new(self)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.cols(),
            });
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)] - dot(&l.row(j)[..j], &l.row(j)[..j]);
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            diag = diag.sqrt();
            l[(j, j)] = diag;
            for i in (j + 1)..n {
                let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
                l[(i, j)] = s / diag;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrize();
        inv
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidDelta(delta))
    }
}

/// Ridge solution `(ZᵀZ + δ²I)⁻¹ Zᵀy` by a Cholesky solve of the normal
/// equations.
pub fn solve_ridge_primal(z: &Matrix, y: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    if y.len() != z.rows() {
        return Err(Error::DimensionMismatch {
            expected: z.rows(),
            got: y.len(),
        });
    }
    let a = z.gram().add_diagonal(delta * delta);
    Ok(a.cholesky()?.solve(&z.vecmat(y)))
}

/// Ridge solution in dual form `Xᵀ(XXᵀ + δ²I)⁻¹ y`; cheaper when `N < D`.
pub fn solve_ridge_dual(x: &Matrix, y: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    let k = x.transpose().gram().add_diagonal(delta * delta);
    let alpha = k.cholesky()?.solve(y);
    Ok(x.vecmat(&alpha))
}

/// `exp(-Σ_d λ_d |a_d - b_d|)`.
pub fn laplace_kernel(a: &[f64], b: &[f64], lifetimes: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(lifetimes)
        .map(|((x, y), l)| l * (x - y).abs())
        .sum();
    (-s).exp()
}

fn check_lifetimes(lifetimes: &[f64], dim: usize) -> Result<()> {
    if lifetimes.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: lifetimes.len(),
        });
    }
    match lifetimes.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        Some(&l) => Err(Error::InvalidLifetime(l)),
        None => Ok(()),
    }
}

/// Gram matrix of the general Laplace kernel over the rows of `x`.
pub fn laplace_gram(x: &Matrix, lifetimes: &[f64]) -> Result<Matrix> {
    check_lifetimes(lifetimes, x.cols())?;
    let n = x.rows();
    let mut k = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = laplace_kernel(x.row(i), x.row(j), lifetimes);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Cross-kernel rows `k(a_i, b_j)`.
pub fn laplace_cross(a: &Matrix, b: &Matrix, lifetimes: &[f64]) -> Result<Matrix> {
    check_lifetimes(lifetimes, a.cols())?;
    let mut k = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            k[(i, j)] = laplace_kernel(a.row(i), b.row(j), lifetimes);
        }
    }
    Ok(k)
}

/// Kernel ridge regression with the factorization of `K + δ²I` cached so
/// repeated predictions cost `O(N)` each.
#[derive(Clone, Debug)]
pub struct KernelRidge {
    alpha: Vec<f64>,
}

impl KernelRidge {
    pub fn fit(k: &Matrix, y: &[f64], delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if !k.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite kernel ridge input".into()));
        }
        if k.rows() != y.len() || k.cols() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: k.rows(),
            });
        }
        let chol = k.add_diagonal(delta * delta).cholesky()?;
        Ok(Self { alpha: chol.solve(y) })
    }

    pub fn predict(&self, k_star: &[f64]) -> f64 {
        dot(k_star, &self.alpha)
    }
}

/// One-shot `k(x*, X)(K + δ²I)⁻¹ y`.
pub fn kernel_ridge_predict(k: &Matrix, k_star: &[f64], y: &[f64], delta: f64) -> Result<f64> {
    if k_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite kernel row".into()));
    }
    Ok(KernelRidge::fit(k, y, delta)?.predict(k_star))
}

/// The inverse `(ZᵀZ + δ²I)⁻¹` maintained under incremental updates.
///
/// The forward matrix is not stored. Updates are counted so that callers
/// holding the feature matrix can refactorize every [`REFRESH_INTERVAL`]
/// updates and bound floating-point drift.
#[derive(Clone, Debug)]
pub struct RegularizedInverse {
    inv: Matrix,
    delta2: f64,
    updates: usize,
}

impl RegularizedInverse {
    /// Inverse of `gram + δ²I`.
    pub fn from_gram(gram: &Matrix, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let delta2 = delta * delta;
        let inv = gram.add_diagonal(delta2).cholesky()?.inverse();
        Ok(Self {
            inv,
            delta2,
            updates: 0,
        })
    }

    /// Inverse of an arbitrary symmetric positive definite matrix.
    pub fn from_spd(a: &Matrix, delta2: f64) -> Result<Self> {
        Ok(Self {
            inv: a.cholesky()?.inverse(),
            delta2,
            updates: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.inv.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.inv
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    pub fn updates_since_refresh(&self) -> usize {
        self.updates
    }

    pub fn needs_refresh(&self) -> bool {
        self.updates >= REFRESH_INTERVAL
    }

    /// Recompute from the forward matrix (`ZᵀZ + δ²I` or any SPD matrix the
    /// inverse is tracking).
    pub fn refresh(&mut self, forward: &Matrix) -> Result<()> {
        self.inv = forward.cholesky()?.inverse();
        self.updates = 0;
        Ok(())
    }

    pub fn symmetrize(&mut self) {
        self.inv.symmetrize();
    }

    /// `A ← A + u vᵀ`: `A⁻¹ ← A⁻¹ − (A⁻¹u)(vᵀA⁻¹) / (1 + vᵀA⁻¹u)`.
    ///
    /// No symmetrization happens here; intermediate steps of a composite
    /// update may be legitimately asymmetric.
    pub fn rank1_update(&mut self, u: &[f64], v: &[f64]) -> Result<()> {
        let n = self.dim();
        if u.len() != n || v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u.len().min(v.len()),
            });
        }
        let au = self.inv.matvec(u);
        let va = self.inv.vecmat(v);
        let denom = 1.0 + dot(v, &au);
        if !(denom.abs() > SINGULAR_TOL) {
            return Err(Error::SingularUpdate(denom));
        }
        for i in 0..n {
            let s = au[i] / denom;
            if s == 0.0 {
                continue;
            }
            for (x, &w) in self.inv.row_mut(i).iter_mut().zip(&va) {
                *x -= s * w;
            }
        }
        self.updates += 1;
        Ok(())
    }

    /// Drop row and column `i` of the forward matrix: `Ã⁻¹ = E − f gᵀ / h`.
    pub fn delete_row_col(&mut self, i: usize) -> Result<()> {
        let n = self.dim();
        if i >= n {
            return Err(Error::InvalidArgument(format!("index {i} out of range for {n}")));
        }
        let h = self.inv[(i, i)];
        if !(h.abs() > SINGULAR_TOL) {
            return Err(Error::CannotDelete(h));
        }
        let f: Vec<f64> = (0..n).filter(|&k| k != i).map(|k| self.inv[(k, i)]).collect();
        let g: Vec<f64> = (0..n).filter(|&k| k != i).map(|k| self.inv[(i, k)]).collect();
        let mut out = Matrix::zeros(n - 1, n - 1);
        for (r, src) in (0..n).filter(|&k| k != i).enumerate() {
            let row = self.inv.row(src);
            let dst = out.row_mut(r);
            let fr = f[r] / h;
            for (c, col) in (0..n).filter(|&k| k != i).enumerate() {
                dst[c] = row[col] - fr * g[c];
            }
        }
        self.inv = out;
        self.updates += 1;
        Ok(())
    }

    /// Append row `cᵀ`, column `b` and corner `d` to the forward matrix,
    /// using the Schur complement `s = d − cᵀA⁻¹b`.
    pub fn extend_row_col(&mut self, b: &[f64], c: &[f64], d: f64) -> Result<()> {
        let n = self.dim();
        if b.len() != n || c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.len().min(c.len()),
            });
        }
        let ab = self.inv.matvec(b);
        let ca = self.inv.vecmat(c);
        let s = d - dot(c, &ab);
        if !(s.abs() > SINGULAR_TOL) {
            return Err(Error::SingularExtension(s));
        }
        let mut out = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            let src = self.inv.row(i);
            let dst = out.row_mut(i);
            let w = ab[i] / s;
            for j in 0..n {
                dst[j] = src[j] + w * ca[j];
            }
            dst[n] = -w;
        }
        for j in 0..n {
            out[(n, j)] = -ca[j] / s;
        }
        out[(n, n)] = 1.0 / s;
        self.inv = out;
        self.updates += 1;
        Ok(())
    }
}
