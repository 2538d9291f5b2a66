//! CSV ingestion, CSV export and the train/validation split.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};
use mondrian::{Matrix, RngStream};
use rand::seq::SliceRandom;

use crate::error::{CliError, CliResult};

/// A regression dataset: features, targets and where they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// `(min, max)` of every feature column.
    pub ranges: Vec<(f64, f64)>,
    pub source: PathBuf,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, feature_names: Vec<String>, target_name: String, source: PathBuf) -> CliResult<Self> {
        if x.rows() != y.len() {
            return Err(CliError::Validation(format!("{} feature rows but {} targets", x.rows(), y.len())));
        }
        if x.rows() < 2 {
            return Err(CliError::Validation(format!("need at least 2 rows, got {}", x.rows())));
        }
        if feature_names.len() != x.cols() {
            return Err(CliError::Validation(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x.cols()
            )));
        }
        let ranges = column_ranges(&x);
        Ok(Self {
            x,
            y,
            feature_names,
            target_name,
            ranges,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

fn column_ranges(x: &Matrix) -> Vec<(f64, f64)> {
    (0..x.cols())
        .map(|j| {
            (0..x.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                (lo.min(x[(i, j)]), hi.max(x[(i, j)]))
            })
        })
        .collect()
}

fn default_names(width: usize) -> Vec<String> {
    (0..width).map(|j| format!("x{j}")).collect()
}

/// Resolve `target` to a column index: a header name first, then a 0-based
/// index. An empty target means the last column.
fn resolve_target(target: &str, names: &[String]) -> CliResult<usize> {
    if target.is_empty() {
        return Ok(names.len() - 1);
    }
    if let Some(j) = names.iter().position(|n| n == target) {
        return Ok(j);
    }
    match target.parse::<usize>() {
        Ok(j) if j < names.len() => Ok(j),
        _ => Err(CliError::Validation(format!(
            "target column {target:?} not found; columns are {}",
            names.join(", ")
        ))),
    }
}

struct Table {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table<R: Read>(reader: R, has_header: bool) -> CliResult<Table> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(has_header)
        .trim(Trim::All)
        .from_reader(reader);
    let header: Option<StringRecord> = if has_header {
        Some(
            rdr.headers()
                .map_err(|e| CliError::Validation(format!("cannot read header: {e}")))?
                .clone(),
        )
    } else {
        None
    };
    let mut names = header.map(|h| h.iter().map(str::to_string).collect::<Vec<_>>());
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => CliError::Validation(format!(
                    "line {line}: expected {expected_len} fields, found {len}"
                )),
                _ => CliError::Validation(format!("line {line}: {e}")),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let names = names.get_or_insert_with(|| default_names(record.len()));
        let row = record
            .iter()
            .enumerate()
            .map(|(j, cell)| parse_cell(cell, line, &names[j]))
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    let names = names.unwrap_or_default();
    if names.is_empty() {
        return Err(CliError::Validation("file has no columns".into()));
    }
    Ok(Table { names, rows })
}

fn parse_cell(cell: &str, line: u64, column: &str) -> CliResult<f64> {
    if cell.is_empty() {
        return Err(CliError::Validation(format!("line {line}, column {column:?}: missing value")));
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(CliError::Validation(format!(
            "line {line}, column {column:?}: non-finite value {cell:?}"
        ))),
        Err(_) => Err(CliError::Validation(format!(
            "line {line}, column {column:?}: cannot parse {cell:?} as a number"
        ))),
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))
}

/// Read a labelled dataset from a reader. `target` is a header name, a
/// 0-based column index, or empty for the last column.
pub fn ingest_reader<R: Read>(reader: R, source: &Path, target: &str, has_header: bool) -> CliResult<Dataset> {
    let table = read_table(reader, has_header)?;
    if table.names.len() < 2 {
        return Err(CliError::Validation("need at least one feature column besides the target".into()));
    }
    let t = resolve_target(target, &table.names)?;
    let feature_names: Vec<String> = table
        .names
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != t)
        .map(|(_, n)| n.clone())
        .collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r[t]).collect();
    let features: Vec<Vec<f64>> = table
        .rows
        .iter()
        .map(|r| r.iter().enumerate().filter(|&(j, _)| j != t).map(|(_, &v)| v).collect())
        .collect();
    if features.len() < 2 {
        return Err(CliError::Validation(format!("need at least 2 rows, got {}", features.len())));
    }
    let x = Matrix::from_rows(&features)?;
    Dataset::new(x, y, feature_names, table.names[t].clone(), source.to_path_buf())
}

/// Read a labelled dataset from a CSV file.
pub fn ingest_csv(path: &Path, target: &str, has_header: bool) -> CliResult<Dataset> {
    ingest_reader(open(path)?, path, target, has_header)
}

/// Read an unlabelled feature matrix (every column is a feature).
pub fn ingest_features(path: &Path, has_header: bool) -> CliResult<Matrix> {
    let table = read_table(open(path)?, has_header)?;
    if table.rows.is_empty() {
        return Err(CliError::Validation(format!("{} has no rows", path.display())));
    }
    Ok(Matrix::from_rows(&table.rows)?)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Write `dataset` as CSV with a header, features first and the target last.
pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> CliResult<()> {
    let mut w = WriterBuilder::new().from_writer(out);
    let io = |e: csv::Error| CliError::Runtime(format!("cannot write CSV: {e}"));
    let mut header = dataset.feature_names.clone();
    header.push(dataset.target_name.clone());
    w.write_record(&header).map_err(io)?;
    for i in 0..dataset.len() {
        let mut row: Vec<String> = dataset.x.row(i).iter().map(|&v| format_f64(v)).collect();
        row.push(format_f64(dataset.y[i]));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("cannot write CSV: {e}")))
}

/// How rows are divided into training and validation sets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> CliResult<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(CliError::Validation(format!(
                "split fraction must lie strictly between 0 and 1, got {train_fraction}"
            )));
        }
        Ok(Self { train_fraction, seed })
    }

    /// Training mask over `n` rows. A seeded shuffle picks
    /// `round(fraction · n)` training rows, clamped so both sides are
    /// non-empty.
    pub fn assign(&self, n: usize) -> CliResult<Vec<bool>> {
        if n < 2 {
            return Err(CliError::Validation(format!("cannot split {n} rows")));
        }
        let n_train = ((self.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut RngStream::derive(self.seed, "split", 0));
        let mut is_train = vec![false; n];
        for &i in &order[..n_train] {
            is_train[i] = true;
        }
        Ok(is_train)
    }
}

/// Rows of `dataset` split into `(x_train, y_train, x_val, y_val)`.
pub fn split_rows(dataset: &Dataset, is_train: &[bool]) -> (Matrix, Vec<f64>, Matrix, Vec<f64>) {
    let (train, val): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| is_train[i]);
    (
        dataset.x.select_rows(&train),
        train.iter().map(|&i| dataset.y[i]).collect(),
        dataset.x.select_rows(&val),
        val.iter().map(|&i| dataset.y[i]).collect(),
    )
}
