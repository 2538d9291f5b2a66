//! Indicator feature matrices and their regularized inverse.
//!
//! A [`FeatureState`] holds the random-feature matrix `Z` of an ensemble of
//! `M` partitions (Mondrian trees or Mondrian grids) together with the
//! inverse `(Z_trainᵀ Z_train + δ²I)⁻¹`. Every row has exactly one nonzero
//! entry `1/√M` per partition, in the column of the cell that contains it,
//! so `Z` is stored as per-column member lists rather than densely.
//!
//! Columns are created, deleted and merged while the inverse is kept current
//! with the incremental updates from [`crate::linalg`]. Validation rows are
//! part of `Z` (they make cells non-empty and receive predictions) but never
//! enter the Gram matrix.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RegularizedInverse};
use crate::rmse;

/// A cell of one partition: `(partition index, cell id)`.
pub type CellKey = (usize, u64);

#[derive(Clone, Debug)]
struct Column {
    key: CellKey,
    rows: Vec<usize>,
}

/// Result of [`FeatureState::fit_eval`].
#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub theta: Vec<f64>,
    pub rmse_train: f64,
    pub rmse_val: f64,
}

#[derive(Clone, Debug)]
pub struct FeatureState {
    n_parts: usize,
    scale: f64,
    delta: f64,
    columns: Vec<Column>,
    position: HashMap<CellKey, usize>,
    /// `row_cells[r][m]` is the id of the cell of partition `m` holding row `r`.
    row_cells: Vec<Vec<u64>>,
    is_train: Vec<bool>,
    y: Vec<f64>,
    inv: RegularizedInverse,
}

impl FeatureState {
    /// Build from per-row cell assignments. Columns are ordered by partition,
    /// then by first appearance of the cell in row order.
    pub fn new(row_cells: Vec<Vec<u64>>, is_train: Vec<bool>, y: Vec<f64>, delta: f64) -> Result<Self> {
        let n = row_cells.len();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        if is_train.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: is_train.len().min(y.len()),
            });
        }
        let n_parts = row_cells[0].len();
        if n_parts == 0 {
            return Err(Error::InvalidArgument("need at least one partition".into()));
        }
        if let Some(r) = row_cells.iter().position(|c| c.len() != n_parts) {
            return Err(Error::InvalidArgument(format!("row {r} has the wrong number of cells")));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidDelta(delta));
        }
        let mut columns: Vec<Column> = Vec::new();
        let mut position = HashMap::new();
        for m in 0..n_parts {
            for (r, cells) in row_cells.iter().enumerate() {
                let key = (m, cells[m]);
                let pos = *position.entry(key).or_insert_with(|| {
                    columns.push(Column { key, rows: Vec::new() });
                    columns.len() - 1
                });
                columns[pos].rows.push(r);
            }
        }
        let mut state = Self {
            n_parts,
            scale: 1.0 / (n_parts as f64).sqrt(),
            delta,
            columns,
            position,
            row_cells,
            is_train,
            y,
            inv: RegularizedInverse::from_spd(&Matrix::identity(0), delta * delta)?,
        };
        state.inv = RegularizedInverse::from_gram(&state.gram(), delta)?;
        Ok(state)
    }

    pub fn num_features(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.row_cells.len()
    }

    pub fn num_parts(&self) -> usize {
        self.n_parts
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn inverse(&self) -> &RegularizedInverse {
        &self.inv
    }

    pub fn is_train(&self) -> &[bool] {
        &self.is_train
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn key(&self, pos: usize) -> CellKey {
        self.columns[pos].key
    }

    pub fn keys(&self) -> impl Iterator<Item = CellKey> + '_ {
        self.columns.iter().map(|c| c.key)
    }

    /// Sorted member rows of the column at `pos`.
    pub fn rows(&self, pos: usize) -> &[usize] {
        &self.columns[pos].rows
    }

    pub fn position(&self, key: CellKey) -> Option<usize> {
        self.position.get(&key).copied()
    }

    pub fn cell_of(&self, row: usize, part: usize) -> u64 {
        self.row_cells[row][part]
    }

    /// Fraction of partitions placing rows `i` and `j` in the same cell.
    pub fn approx_kernel(&self, i: usize, j: usize) -> f64 {
        let same = self.row_cells[i]
            .iter()
            .zip(&self.row_cells[j])
            .filter(|(a, b)| a == b)
            .count();
        same as f64 / self.n_parts as f64
    }

    /// Dense `N × C` feature matrix.
    pub fn z_matrix(&self) -> Matrix {
        let mut z = Matrix::zeros(self.num_rows(), self.num_features());
        for (c, col) in self.columns.iter().enumerate() {
            for &r in &col.rows {
                z[(r, c)] = self.scale;
            }
        }
        z
    }

    /// Dense feature matrix restricted to training rows, in row order.
    pub fn z_train(&self) -> Matrix {
        let train: Vec<usize> = (0..self.num_rows()).filter(|&r| self.is_train[r]).collect();
        self.z_matrix().select_rows(&train)
    }

    /// `Z_trainᵀ Z_train` computed from the member lists.
    pub fn gram(&self) -> Matrix {
        let c = self.num_features();
        let mut g = Matrix::zeros(c, c);
        let w = self.scale * self.scale;
        let mut cols = Vec::with_capacity(self.n_parts);
        for r in (0..self.num_rows()).filter(|&r| self.is_train[r]) {
            cols.clear();
            cols.extend((0..self.n_parts).filter_map(|m| self.position.get(&(m, self.row_cells[r][m]))));
            for &&a in &cols {
                for &&b in &cols {
                    g[(a, b)] += w;
                }
            }
        }
        g
    }

    /// `Z_trainᵀ Z_train + δ²I`.
    pub fn forward_matrix(&self) -> Matrix {
        self.gram().add_diagonal(self.delta * self.delta)
    }

    /// Gram entries between a cell with member `rows` and every present
    /// column, ignoring partition `skip`.
    fn border(&self, rows: &[usize], skip: Option<usize>) -> Vec<f64> {
        let mut b = vec![0.0; self.num_features()];
        let w = self.scale * self.scale;
        for &r in rows.iter().filter(|&&r| self.is_train[r]) {
            for m in (0..self.n_parts).filter(|&m| Some(m) != skip) {
                if let Some(&p) = self.position.get(&(m, self.row_cells[r][m])) {
                    b[p] += w;
                }
            }
        }
        b
    }

    fn train_count(&self, rows: &[usize]) -> usize {
        rows.iter().filter(|&&r| self.is_train[r]).count()
    }

    fn maybe_refresh(&mut self) -> Result<()> {
        if self.inv.needs_refresh() {
            let forward = self.forward_matrix();
            self.inv.refresh(&forward)?;
        }
        Ok(())
    }

    fn reindex_from(&mut self, start: usize) {
        for (p, col) in self.columns.iter().enumerate().skip(start) {
            self.position.insert(col.key, p);
        }
    }

    /// Remove the column at `pos`. Its rows are left without a cell in that
    /// partition until a replacement column is appended.
    pub fn delete_column(&mut self, pos: usize) -> Result<Vec<usize>> {
        if pos >= self.num_features() {
            return Err(Error::InvalidArgument(format!("no column {pos}")));
        }
        self.inv.delete_row_col(pos)?;
        let col = self.columns.remove(pos);
        self.position.remove(&col.key);
        self.reindex_from(pos);
        self.inv.symmetrize();
        self.maybe_refresh()?;
        Ok(col.rows)
    }

    /// Append a column for cell `key` containing `rows`, which must not be
    /// covered by another column of the same partition.
    pub fn append_column(&mut self, key: CellKey, mut rows: Vec<usize>) -> Result<usize> {
        if key.0 >= self.n_parts {
            return Err(Error::InvalidArgument(format!("no partition {}", key.0)));
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty cells are not materialized".into()));
        }
        if self.position.contains_key(&key) {
            return Err(Error::InvalidArgument(format!("cell {key:?} already has a column")));
        }
        rows.sort_unstable();
        let b = self.border(&rows, Some(key.0));
        let d = self.train_count(&rows) as f64 * self.scale * self.scale + self.delta * self.delta;
        self.inv.extend_row_col(&b, &b, d)?;
        self.inv.symmetrize();
        for &r in &rows {
            self.row_cells[r][key.0] = key.1;
        }
        self.columns.push(Column { key, rows });
        let pos = self.columns.len() - 1;
        self.position.insert(key, pos);
        self.maybe_refresh()?;
        Ok(pos)
    }

    /// Give the column at `pos` a new cell key without touching `Z`.
    pub fn rekey(&mut self, pos: usize, key: CellKey) -> Result<()> {
        let old = self.columns[pos].key;
        if old.0 != key.0 {
            return Err(Error::InvalidArgument("rekey cannot change partition".into()));
        }
        if old == key {
            return Ok(());
        }
        if self.position.contains_key(&key) {
            return Err(Error::InvalidArgument(format!("cell {key:?} already has a column")));
        }
        self.position.remove(&old);
        self.position.insert(key, pos);
        self.columns[pos].key = key;
        for &r in &self.columns[pos].rows {
            self.row_cells[r][key.0] = key.1;
        }
        Ok(())
    }

    /// Replace columns `i` and `j` (disjoint cells of one partition) by their
    /// sum at position `i` and drop `j`, updating the inverse by adding row
    /// `j` to row `i`, column `j` to column `i`, deleting `j` and subtracting
    /// `δ²` from the merged diagonal entry. Returns the merged column's
    /// position.
    pub fn merge_columns(&mut self, i: usize, j: usize, key: CellKey) -> Result<usize> {
        let c = self.num_features();
        if i == j || i >= c || j >= c {
            return Err(Error::InvalidArgument(format!("cannot merge columns {i} and {j}")));
        }
        let part = self.columns[i].key.0;
        if self.columns[j].key.0 != part || key.0 != part {
            return Err(Error::InvalidArgument("merged cells must share a partition".into()));
        }
        if key != self.columns[i].key && key != self.columns[j].key && self.position.contains_key(&key) {
            return Err(Error::InvalidArgument(format!("cell {key:?} already has a column")));
        }

        let mut r_j = self.border(&self.columns[j].rows, None);
        r_j[j] += self.delta * self.delta;
        let e_i = unit(c, i);
        self.inv.rank1_update(&e_i, &r_j)?;
        let mut c_j = r_j;
        c_j[i] += c_j[j];
        self.inv.rank1_update(&c_j, &e_i)?;
        self.inv.delete_row_col(j)?;
        let i_new = if i > j { i - 1 } else { i };
        let mut down = unit(c - 1, i_new);
        down[i_new] = -self.delta * self.delta;
        self.inv.rank1_update(&down, &unit(c - 1, i_new))?;
        self.inv.symmetrize();

        let removed = self.columns.remove(j);
        self.position.remove(&removed.key);
        let old_key = self.columns[i_new].key;
        self.position.remove(&old_key);
        let merged = &mut self.columns[i_new];
        merged.rows.extend(removed.rows);
        merged.rows.sort_unstable();
        merged.key = key;
        for &r in &self.columns[i_new].rows {
            self.row_cells[r][part] = key.1;
        }
        self.reindex_from(j.min(i_new));
        self.position.insert(key, i_new);
        self.maybe_refresh()?;
        Ok(i_new)
    }

    /// `θ = C⁻¹ Z_trainᵀ y` and the train/validation RMSE of `Zθ`.
    pub fn fit_eval(&self) -> Fit {
        let zty: Vec<f64> = self
            .columns
            .iter()
            .map(|col| {
                col.rows
                    .iter()
                    .filter(|&&r| self.is_train[r])
                    .map(|&r| self.y[r])
                    .sum::<f64>()
                    * self.scale
            })
            .collect();
        let theta = self.inv.matrix().matvec(&zty);
        let (mut pt, mut yt, mut pv, mut yv) = (vec![], vec![], vec![], vec![]);
        for r in 0..self.num_rows() {
            let p = self.predict_cells(&theta, &self.row_cells[r]);
            if self.is_train[r] {
                pt.push(p);
                yt.push(self.y[r]);
            } else {
                pv.push(p);
                yv.push(self.y[r]);
            }
        }
        Fit {
            theta,
            rmse_train: rmse(&pt, &yt),
            rmse_val: rmse(&pv, &yv),
        }
    }

    /// `z(x)ᵀθ` for a point whose cell in partition `m` is `cells[m]`. Cells
    /// without a column contribute nothing.
    pub fn predict_cells(&self, theta: &[f64], cells: &[u64]) -> f64 {
        cells
            .iter()
            .enumerate()
            .filter_map(|(m, &cell)| self.position.get(&(m, cell)))
            .map(|&p| theta[p])
            .sum::<f64>()
            * self.scale
    }

    /// Column positions sorted by (partition, smallest member row), which is
    /// independent of the order in which columns were created.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_features()).collect();
        order.sort_by_key(|&p| (self.columns[p].key.0, self.columns[p].rows[0]));
        order
    }

    /// Member lists per partition in canonical order.
    pub fn canonical_cells(&self) -> Vec<(usize, Vec<usize>)> {
        self.canonical_order()
            .into_iter()
            .map(|p| (self.columns[p].key.0, self.columns[p].rows.clone()))
            .collect()
    }

    /// The inverse with rows and columns permuted into canonical order.
    pub fn canonical_inverse(&self) -> Matrix {
        let order = self.canonical_order();
        let inv = self.inv.matrix();
        let mut out = Matrix::zeros(order.len(), order.len());
        for (a, &pa) in order.iter().enumerate() {
            for (b, &pb) in order.iter().enumerate() {
                out[(a, b)] = inv[(pa, pb)];
            }
        }
        out
    }

    /// Check the bookkeeping: one column per non-empty cell, each row in
    /// exactly one column per partition.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![vec![false; self.n_parts]; self.num_rows()];
        for (p, col) in self.columns.iter().enumerate() {
            if self.position.get(&col.key) != Some(&p) {
                return Err(Error::InvalidArgument(format!("column {p} is not indexed")));
            }
            if col.rows.is_empty() {
                return Err(Error::InvalidArgument(format!("column {p} is empty")));
            }
            for &r in &col.rows {
                let (m, cell) = col.key;
                if seen[r][m] || self.row_cells[r][m] != cell {
                    return Err(Error::InvalidArgument(format!("row {r} misassigned in partition {m}")));
                }
                seen[r][m] = true;
            }
        }
        if self.position.len() != self.columns.len() || seen.iter().flatten().any(|s| !s) {
            return Err(Error::InvalidArgument("cells do not cover every row".into()));
        }
        if self.inv.dim() != self.columns.len() {
            return Err(Error::InvalidArgument("inverse has the wrong size".into()));
        }
        Ok(())
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_ridge_primal;

    /// Two partitions over five rows; row 4 is validation.
    fn small() -> FeatureState {
        let cells = vec![vec![0, 0], vec![0, 1], vec![1, 1], vec![1, 1], vec![2, 0]];
        FeatureState::new(
            cells,
            vec![true, true, true, true, false],
            vec![1.0, 2.0, -1.0, 0.5, 3.0],
            0.7,
        )
        .unwrap()
    }

    fn inverse_error(s: &FeatureState) -> f64 {
        let direct = s.forward_matrix().cholesky().unwrap().inverse();
        s.inverse().matrix().max_abs_diff(&direct)
    }

    #[test]
    fn rows_have_one_entry_per_partition() {
        let s = small();
        s.validate().unwrap();
        let z = s.z_matrix();
        for r in 0..z.rows() {
            let self_ip: f64 = z.row(r).iter().map(|v| v * v).sum();
            assert!((self_ip - 1.0).abs() < 1e-15);
        }
        assert_eq!(s.num_features(), 5);
    }

    #[test]
    fn gram_matches_dense_product() {
        let s = small();
        assert!(s.gram().max_abs_diff(&s.z_train().gram()) < 1e-15);
        assert!(inverse_error(&s) < 1e-12);
    }

    #[test]
    fn fit_matches_ridge_solve() {
        let s = small();
        let fit = s.fit_eval();
        let y_train = [1.0, 2.0, -1.0, 0.5];
        let direct = solve_ridge_primal(&s.z_train(), &y_train, 0.7).unwrap();
        for (a, b) in fit.theta.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_targets_give_zero_weights() {
        let cells = vec![vec![0], vec![1], vec![1]];
        let s = FeatureState::new(cells, vec![true, true, false], vec![0.0, 0.0, 2.0], 1.0).unwrap();
        let fit = s.fit_eval();
        assert!(fit.theta.iter().all(|&t| t == 0.0));
        assert!((fit.rmse_val - 2.0).abs() < 1e-15);
    }

    #[test]
    fn merge_matches_rebuild() {
        let mut s = small();
        // partition 1 cells 0 = {0, 4} and 1 = {1, 2, 3}
        let i = s.position((1, 0)).unwrap();
        let j = s.position((1, 1)).unwrap();
        s.merge_columns(j, i, (1, 7)).unwrap();
        s.validate().unwrap();
        assert_eq!(s.num_features(), 4);
        assert!(inverse_error(&s) < 1e-12);
        assert!(s.inverse().matrix().asymmetry() < 1e-12);
        let p = s.position((1, 7)).unwrap();
        assert_eq!(s.rows(p), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn delete_and_append_matches_rebuild() {
        let mut s = small();
        let p = s.position((0, 1)).unwrap();
        let rows = s.delete_column(p).unwrap();
        assert_eq!(rows, vec![2, 3]);
        s.append_column((0, 10), vec![2]).unwrap();
        s.append_column((0, 11), vec![3]).unwrap();
        s.validate().unwrap();
        assert!(inverse_error(&s) < 1e-12);
    }

    #[test]
    fn rekey_keeps_inverse() {
        let mut s = small();
        let before = s.inverse().matrix().clone();
        let p = s.position((0, 2)).unwrap();
        s.rekey(p, (0, 9)).unwrap();
        s.validate().unwrap();
        assert_eq!(s.cell_of(4, 0), 9);
        assert_eq!(s.inverse().matrix(), &before);
    }

    #[test]
    fn approx_kernel_counts_shared_cells() {
        let s = small();
        assert_eq!(s.approx_kernel(2, 3), 1.0);
        assert_eq!(s.approx_kernel(1, 2), 0.5);
        assert_eq!(s.approx_kernel(0, 2), 0.0);
        assert_eq!(s.approx_kernel(4, 4), 1.0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            FeatureState::new(vec![vec![0]], vec![true], vec![1.0], 0.0),
            Err(Error::InvalidDelta(_))
        ));
        assert!(FeatureState::new(vec![], vec![], vec![], 1.0).is_err());
        assert!(FeatureState::new(vec![vec![0], vec![0, 1]], vec![true; 2], vec![0.0; 2], 1.0).is_err());
    }
}
