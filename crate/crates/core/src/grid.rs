//! Mondrian grids and greedy lifetime search.
//!
//! A Mondrian grid runs one independent one-dimensional Mondrian process per
//! input dimension and extends every cut through the whole space. An
//! ensemble of `M` grids with per-dimension lifetimes `λ = (λ₁,…,λ_D)`
//! yields random features for the kernel `exp(−Σ_d λ_d |x_d − x′_d|)`.
//!
//! Only the first cut time of each gap between consecutive distinct data
//! coordinates matters for which cells the data falls into, so these times
//! are sampled once in [`IntervalCuts`]. Changing one `λ_d` then activates
//! or deactivates a single gap of a single grid and touches only the cells
//! it splits or merges.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureState, Fit};
use crate::forest::check_data;
use crate::linalg::Matrix;
use crate::rng::RngStream;

/// Default threshold for [`select_features`].
pub const DEFAULT_EPS: f64 = 1e-6;

/// The first cut time of one gap in one grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapEvent {
    pub time: f64,
    pub grid: usize,
    /// Gap `g` lies between sorted distinct coordinates `g` and `g + 1`.
    pub gap: usize,
}

/// Sorted distinct coordinates per dimension and the first cut time of every
/// gap in every grid.
#[derive(Clone, Debug)]
pub struct IntervalCuts {
    coords: Vec<Vec<f64>>,
    times: Vec<Vec<Vec<f64>>>,
    events: Vec<Vec<GapEvent>>,
}

fn distinct_coords(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.cols())
        .map(|d| {
            let mut c = x.column(d);
            c.sort_by(f64::total_cmp);
            c.dedup();
            c
        })
        .collect()
}

impl IntervalCuts {
    /// Sample first cut times for `n_grids` grids over the distinct
    /// coordinates of `x`. Grid `m`, dimension `d` draws from the stream
    /// derived from `(seed, "grid-dim", m·2³² + d)`.
    pub fn sample(x: &Matrix, n_grids: usize, seed: u64) -> Result<Self> {
        if n_grids == 0 {
            return Err(Error::InvalidArgument("need at least one grid".into()));
        }
        let coords = distinct_coords(x);
        let times = (0..n_grids)
            .map(|m| {
                coords
                    .iter()
                    .enumerate()
                    .map(|(d, c)| {
                        let mut rng = RngStream::derive(seed, "grid-dim", ((m as u64) << 32) | d as u64);
                        c.windows(2).map(|w| rng.exp(w[1] - w[0])).collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_times(coords, times)
    }

    /// Use given first cut times: `times[m][d][g]` for gap `g` of dimension
    /// `d` in grid `m`.
    pub fn from_times(coords: Vec<Vec<f64>>, times: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("need at least one grid".into()));
        }
        for c in &coords {
            if c.is_empty() || c.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidArgument("coordinates must be strictly increasing".into()));
            }
        }
        for per_grid in &times {
            if per_grid.len() != coords.len() {
                return Err(Error::DimensionMismatch {
                    expected: coords.len(),
                    got: per_grid.len(),
                });
            }
            for (c, t) in coords.iter().zip(per_grid) {
                if t.len() + 1 != c.len() || t.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::InvalidArgument("one positive time per gap required".into()));
                }
            }
        }
        let events = (0..coords.len())
            .map(|d| {
                let mut ev: Vec<GapEvent> = times
                    .iter()
                    .enumerate()
                    .flat_map(|(grid, per_grid)| {
                        per_grid[d]
                            .iter()
                            .enumerate()
                            .map(move |(gap, &time)| GapEvent { time, grid, gap })
                    })
                    .collect();
                ev.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.grid.cmp(&b.grid)).then(a.gap.cmp(&b.gap)));
                ev
            })
            .collect();
        Ok(Self { coords, times, events })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn num_grids(&self) -> usize {
        self.times.len()
    }

    pub fn coords(&self, d: usize) -> &[f64] {
        &self.coords[d]
    }

    pub fn times(&self, grid: usize, d: usize) -> &[f64] {
        &self.times[grid][d]
    }

    /// Gap events of dimension `d` in activation order.
    pub fn events(&self, d: usize) -> &[GapEvent] {
        &self.events[d]
    }

    fn rank(&self, d: usize, v: f64) -> Option<usize> {
        self.coords[d].binary_search_by(|c| c.total_cmp(&v)).ok()
    }

    /// Whether grid `m` at lifetimes `lambdas` puts data points `a` and `b`
    /// in the same cell.
    pub fn same_cell(&self, m: usize, lambdas: &[f64], a: &[f64], b: &[f64]) -> Result<bool> {
        for d in 0..self.dim() {
            let (ra, rb) = match (self.rank(d, a[d]), self.rank(d, b[d])) {
                (Some(ra), Some(rb)) => (ra.min(rb), ra.max(rb)),
                _ => return Err(Error::InvalidArgument("point is not a data point".into())),
            };
            if self.times[m][d][ra..rb].iter().any(|&t| t <= lambdas[d]) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Per-dimension lifetimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeConfig {
    pub lambdas: Vec<f64>,
}

impl LifetimeConfig {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if let Some(&l) = lambdas.iter().find(|&&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidLifetime(l));
        }
        Ok(Self { lambdas })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            lambdas: vec![0.0; dim],
        }
    }
}

/// A non-empty cell of one grid. `key[d]` is the active gap bounding the
/// cell on the left in dimension `d`, or −1 if there is none.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub grid: usize,
    pub id: u64,
    pub key: Vec<i64>,
    pub rows: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub dim: usize,
    pub dir: Direction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Greedy,
    #[serde(rename = "bidir")]
    Bidirectional,
}

/// One committed move of a search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub lambdas: Vec<f64>,
    pub rmse_val: f64,
    #[serde(rename = "move")]
    pub mv: Move,
}

/// A committed step: the move taken and the resulting validation RMSE.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub mv: Move,
    pub rmse_val: f64,
}

/// An ensemble of Mondrian grids at one lifetime configuration, with its
/// features and regularized inverse.
#[derive(Clone, Debug)]
pub struct GridState {
    cuts: Arc<IntervalCuts>,
    ranks: Arc<Vec<Vec<usize>>>,
    lambdas: Vec<f64>,
    /// Number of events of each dimension currently active.
    active: Vec<usize>,
    active_gaps: Vec<Vec<BTreeSet<usize>>>,
    key_of: Vec<HashMap<u64, Vec<i64>>>,
    id_of: Vec<HashMap<Vec<i64>, u64>>,
    next_id: u64,
    features: FeatureState,
    last_move: Option<Move>,
}

/// Sample `n_grids` grids over all rows of `x` (training and validation)
/// and build the state at `config0`.
pub fn init_grid(
    x: &Matrix,
    y: &[f64],
    is_train: &[bool],
    n_grids: usize,
    config0: &LifetimeConfig,
    delta: f64,
    seed: u64,
) -> Result<GridState> {
    check_data(x, y)?;
    if x.rows() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: x.rows(),
        });
    }
    let cuts = IntervalCuts::sample(x, n_grids, seed)?;
    GridState::build(Arc::new(cuts), x, y, is_train, config0, delta)
}

fn left_gap(set: &BTreeSet<usize>, rank: usize) -> i64 {
    set.range(..rank).next_back().map_or(-1, |&g| g as i64)
}

impl GridState {
    /// Build from scratch with the cuts of `cuts` active up to `config`.
    pub fn build(
        cuts: Arc<IntervalCuts>,
        x: &Matrix,
        y: &[f64],
        is_train: &[bool],
        config: &LifetimeConfig,
        delta: f64,
    ) -> Result<Self> {
        check_data(x, y)?;
        if x.cols() != cuts.dim() || config.lambdas.len() != cuts.dim() {
            return Err(Error::DimensionMismatch {
                expected: cuts.dim(),
                got: if x.cols() != cuts.dim() { x.cols() } else { config.lambdas.len() },
            });
        }
        if is_train.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: is_train.len(),
            });
        }
        let ranks = (0..x.rows())
            .map(|r| {
                (0..cuts.dim())
                    .map(|d| {
                        cuts.rank(d, x.row(r)[d])
                            .ok_or_else(|| Error::InvalidArgument(format!("row {r} not covered by the grid")))
                    })
                    .collect::<Result<Vec<usize>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(cuts, Arc::new(ranks), y, is_train, &config.lambdas, delta)
    }

    fn from_parts(
        cuts: Arc<IntervalCuts>,
        ranks: Arc<Vec<Vec<usize>>>,
        y: &[f64],
        is_train: &[bool],
        lambdas: &[f64],
        delta: f64,
    ) -> Result<Self> {
        LifetimeConfig::new(lambdas.to_vec())?;
        let (n_grids, dim) = (cuts.num_grids(), cuts.dim());
        let active = (0..dim)
            .map(|d| cuts.events(d).partition_point(|e| e.time <= lambdas[d]))
            .collect();
        let active_gaps: Vec<Vec<BTreeSet<usize>>> = (0..n_grids)
            .map(|m| {
                (0..dim)
                    .map(|d| {
                        let t = cuts.times(m, d);
                        (0..t.len()).filter(|&g| t[g] <= lambdas[d]).collect()
                    })
                    .collect()
            })
            .collect();
        let mut key_of = vec![HashMap::new(); n_grids];
        let mut id_of = vec![HashMap::new(); n_grids];
        let mut next_id = 0u64;
        let mut row_cells = vec![Vec::with_capacity(n_grids); ranks.len()];
        for m in 0..n_grids {
            for (r, rank) in ranks.iter().enumerate() {
                let key: Vec<i64> = (0..dim).map(|d| left_gap(&active_gaps[m][d], rank[d])).collect();
                let id = *id_of[m].entry(key.clone()).or_insert_with(|| {
                    next_id += 1;
                    key_of[m].insert(next_id, key);
                    next_id
                });
                row_cells[r].push(id);
            }
        }
        let features = FeatureState::new(row_cells, is_train.to_vec(), y.to_vec(), delta)?;
        Ok(Self {
            cuts,
            ranks,
            lambdas: lambdas.to_vec(),
            active,
            active_gaps,
            key_of,
            id_of,
            next_id,
            features,
            last_move: None,
        })
    }

    /// A fresh state over the same cuts and data at another configuration.
    pub fn with_config(&self, lambdas: &[f64]) -> Result<Self> {
        Self::from_parts(
            self.cuts.clone(),
            self.ranks.clone(),
            self.features.targets(),
            self.features.is_train(),
            lambdas,
            self.features.delta(),
        )
    }

    pub fn cuts(&self) -> &IntervalCuts {
        &self.cuts
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn features(&self) -> &FeatureState {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.cuts.dim()
    }

    /// Active cuts per dimension, summed over grids.
    pub fn cut_counts(&self) -> &[usize] {
        &self.active
    }

    pub fn last_move(&self) -> Option<Move> {
        self.last_move
    }

    pub fn fit_eval(&self) -> Fit {
        self.features.fit_eval()
    }

    /// Cells of grid `m`, ordered by id.
    pub fn cells(&self, m: usize) -> Vec<GridCell> {
        let mut ids: Vec<u64> = self.key_of[m].keys().copied().collect();
        ids.sort_unstable();
        ids.into_iter()
            .map(|id| GridCell {
                grid: m,
                id,
                key: self.key_of[m][&id].clone(),
                rows: self.features.rows(self.features.position((m, id)).expect("cell has a column")).to_vec(),
            })
            .collect()
    }

    /// The non-empty cell adjacent to cell `id` of grid `m` across its
    /// boundary on `side` in dimension `d`.
    pub fn neighbor(&self, m: usize, id: u64, d: usize, side: Side) -> Option<u64> {
        let mut key = self.key_of[m].get(&id)?.clone();
        let gaps = &self.active_gaps[m][d];
        key[d] = match side {
            Side::Left if key[d] < 0 => return None,
            Side::Left => left_gap(gaps, key[d] as usize),
            Side::Right => *gaps.range((key[d] + 1) as usize..).next()? as i64,
        };
        self.id_of[m].get(&key).copied()
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn relabel(&mut self, m: usize, id: u64, key: Vec<i64>) {
        let old = self.key_of[m].insert(id, key.clone()).expect("known cell");
        self.id_of[m].remove(&old);
        self.id_of[m].insert(key, id);
    }

    fn cells_with(&self, m: usize, d: usize, gap: i64) -> Vec<u64> {
        let mut ids: Vec<u64> = self.key_of[m]
            .iter()
            .filter(|(_, k)| k[d] == gap)
            .map(|(&id, _)| id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Activate the next inactive cut of dimension `d` across all grids and
    /// set `λ_d` to its time. Returns false if dimension `d` is exhausted.
    pub fn increase_lifetime(&mut self, d: usize) -> Result<bool> {
        let Some(&ev) = self.cuts.events(d).get(self.active[d]) else {
            return Ok(false);
        };
        let m = ev.grid;
        let prev = left_gap(&self.active_gaps[m][d], ev.gap);
        self.active_gaps[m][d].insert(ev.gap);
        self.active[d] += 1;
        self.lambdas[d] = ev.time;

        for id in self.cells_with(m, d, prev) {
            let pos = self.features.position((m, id)).expect("cell has a column");
            let (left, right): (Vec<usize>, Vec<usize>) = self
                .features
                .rows(pos)
                .iter()
                .partition(|&&r| self.ranks[r][d] <= ev.gap);
            if right.is_empty() {
                continue;
            }
            let mut key = self.key_of[m][&id].clone();
            key[d] = ev.gap as i64;
            if left.is_empty() {
                self.relabel(m, id, key);
                continue;
            }
            self.features.delete_column(pos)?;
            let left_key = self.key_of[m].remove(&id).expect("known cell");
            self.id_of[m].remove(&left_key);
            for (rows, k) in [(left, left_key), (right, key)] {
                let nid = self.fresh_id();
                self.features.append_column((m, nid), rows)?;
                self.key_of[m].insert(nid, k.clone());
                self.id_of[m].insert(k, nid);
            }
        }
        self.last_move = Some(Move {
            dim: d,
            dir: Direction::Increase,
        });
        Ok(true)
    }

    /// Deactivate the most recently activated cut of dimension `d` and set
    /// `λ_d` to the time of the one before it (or 0). Returns false if no
    /// cut of dimension `d` is active.
    pub fn decrease_lifetime(&mut self, d: usize) -> Result<bool> {
        if self.active[d] == 0 {
            return Ok(false);
        }
        let ev = self.cuts.events(d)[self.active[d] - 1];
        let m = ev.grid;
        let right_ids = self.cells_with(m, d, ev.gap as i64);
        let left_of: Vec<Option<u64>> = right_ids
            .iter()
            .map(|&id| self.neighbor(m, id, d, Side::Left))
            .collect();
        self.active_gaps[m][d].remove(&ev.gap);
        self.active[d] -= 1;
        self.lambdas[d] = match self.active[d] {
            0 => 0.0,
            k => self.cuts.events(d)[k - 1].time,
        };
        let prev = left_gap(&self.active_gaps[m][d], ev.gap);

        for (id, left) in right_ids.into_iter().zip(left_of) {
            match left {
                Some(lid) => {
                    let i = self.features.position((m, lid)).expect("cell has a column");
                    let j = self.features.position((m, id)).expect("cell has a column");
                    self.features.merge_columns(i, j, (m, lid))?;
                    let key = self.key_of[m].remove(&id).expect("known cell");
                    self.id_of[m].remove(&key);
                }
                None => {
                    let mut key = self.key_of[m][&id].clone();
                    key[d] = prev;
                    self.relabel(m, id, key);
                }
            }
        }
        self.last_move = Some(Move {
            dim: d,
            dir: Direction::Decrease,
        });
        Ok(true)
    }

    /// Apply a move. Returns false if it is not possible.
    pub fn apply(&mut self, mv: Move) -> Result<bool> {
        match mv.dir {
            Direction::Increase => self.increase_lifetime(mv.dim),
            Direction::Decrease => self.decrease_lifetime(mv.dim),
        }
    }

    fn can_increase(&self, d: usize) -> bool {
        self.active[d] < self.cuts.events(d).len()
    }

    /// Probe each candidate move on a copy of the state and commit the one
    /// with the lowest validation RMSE, ties going to the earliest candidate.
    fn commit_best(&mut self, candidates: Vec<Move>) -> Result<Option<StepOutcome>> {
        let probes: Vec<(GridState, f64)> = candidates
            .par_iter()
            .map(|&mv| {
                let mut probe = self.clone();
                probe.apply(mv)?;
                let rmse = probe.fit_eval().rmse_val;
                Ok((probe, rmse))
            })
            .collect::<Result<_>>()?;
        let errors: Vec<f64> = probes.iter().map(|p| p.1).collect();
        let Some(best) = argmin(&errors) else {
            return Ok(None);
        };
        let (state, rmse_val) = probes.into_iter().nth(best).expect("index in range");
        *self = state;
        Ok(Some(StepOutcome {
            mv: candidates[best],
            rmse_val,
        }))
    }

    /// Increase the lifetime of the dimension whose next cut gives the
    /// lowest validation RMSE. Returns `None` once every dimension is
    /// exhausted.
    pub fn greedy_step(&mut self) -> Result<Option<StepOutcome>> {
        let candidates = (0..self.dim())
            .filter(|&d| self.can_increase(d))
            .map(|dim| Move {
                dim,
                dir: Direction::Increase,
            })
            .collect();
        self.commit_best(candidates)
    }

    /// Like [`Self::greedy_step`] but also considers removing the latest
    /// cut of each dimension. A decrease that would undo the previous
    /// increase of the same dimension is not considered.
    pub fn greedy_step_bidirectional(&mut self) -> Result<Option<StepOutcome>> {
        let mut candidates = Vec::new();
        for dim in 0..self.dim() {
            if self.can_increase(dim) {
                candidates.push(Move {
                    dim,
                    dir: Direction::Increase,
                });
            }
            let undo = Some(Move {
                dim,
                dir: Direction::Increase,
            });
            if self.active[dim] > 0 && self.last_move != undo {
                candidates.push(Move {
                    dim,
                    dir: Direction::Decrease,
                });
            }
        }
        self.commit_best(candidates)
    }
}

/// Index of the smallest error, ties broken by the smallest index.
pub fn argmin(errors: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &e) in errors.iter().enumerate() {
        if best.is_none_or(|b| e < errors[b]) {
            best = Some(i);
        }
    }
    best
}

/// Run up to `budget` optimizer steps, stopping early when no move is left.
pub fn run_search(state: &mut GridState, optimizer: Optimizer, budget: usize) -> Result<Vec<TraceStep>> {
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    let mut trace = Vec::with_capacity(budget);
    for step in 1..=budget {
        let outcome = match optimizer {
            Optimizer::Greedy => state.greedy_step()?,
            Optimizer::Bidirectional => state.greedy_step_bidirectional()?,
        };
        let Some(out) = outcome else { break };
        trace.push(TraceStep {
            step,
            lambdas: state.lambdas().to_vec(),
            rmse_val: out.rmse_val,
            mv: out.mv,
        });
    }
    Ok(trace)
}

/// Dimensions whose lifetime is at least `eps`.
pub fn select_features(config: &LifetimeConfig, eps: f64) -> Result<BTreeSet<usize>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(config
        .lambdas
        .iter()
        .enumerate()
        .filter(|(_, &l)| l >= eps)
        .map(|(d, _)| d)
        .collect())
}
