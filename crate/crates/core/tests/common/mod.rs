#![allow(dead_code)]

use mondrian::{Matrix, RngStream};

/// Uniform points in the unit cube with a smooth target plus noise. Every
/// fourth row is held out for validation.
pub fn synthetic(n: usize, dim: usize, noise: f64, seed: u64) -> (Matrix, Vec<f64>, Vec<bool>) {
    let mut rng = RngStream::new(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.uniform()).collect()).collect();
    let y = rows
        .iter()
        .map(|r| (3.0 * r[0]).sin() + r.iter().skip(1).map(|v| 0.5 * v).sum::<f64>() + noise * (rng.uniform() - 0.5))
        .collect();
    let is_train = (0..n).map(|i| i % 4 != 3).collect();
    (Matrix::from_rows(&rows).unwrap(), y, is_train)
}

/// Split rows into (train, validation) matrices and targets.
pub fn split(x: &Matrix, y: &[f64], is_train: &[bool]) -> (Matrix, Vec<f64>, Matrix, Vec<f64>) {
    let (tr, va): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| is_train[i]);
    (
        x.select_rows(&tr),
        tr.iter().map(|&i| y[i]).collect(),
        x.select_rows(&va),
        va.iter().map(|&i| y[i]).collect(),
    )
}

/// Inverse via nalgebra's LU decomposition, independent of this crate.
pub fn oracle_inverse(a: &Matrix) -> Matrix {
    let n = a.rows();
    let m = nalgebra::DMatrix::from_row_slice(n, a.cols(), a.as_slice());
    let inv = m.try_inverse().expect("invertible");
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = inv[(i, j)];
        }
    }
    out
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
