//! Rendering of command results as JSON or CSV text.

use mondrian::grid::TraceStep;
use mondrian::kernel_approx::KernelPathPoint;
use mondrian::verify::TestReport;
use mondrian::PathPoint;
use serde::Serialize;

use crate::commands::CompareRow;
use crate::dataset::format_f64;

/// Output encoding selected with `--format`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// A compact JSON document followed by a newline.
pub fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("output types always serialize");
    s.push('\n');
    s
}

/// One compact JSON document per line.
pub fn json_lines<T: Serialize>(values: &[T]) -> String {
    values.iter().map(|v| json(v)).collect()
}

fn table(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("CSV of ASCII numbers")
}

fn names(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|c| c.to_string()).collect()
}

pub fn forest_path(points: &[PathPoint], format: Format) -> String {
    match format {
        Format::Json => json(points),
        Format::Csv => table(
            &names(&["lifetime", "rmse_train", "rmse_val"]),
            points
                .iter()
                .map(|p| vec![format_f64(p.lifetime), format_f64(p.rmse_train), format_f64(p.rmse_val)]),
        ),
    }
}

pub fn kernel_path(points: &[KernelPathPoint], format: Format) -> String {
    match format {
        Format::Json => json(points),
        Format::Csv => table(
            &names(&["lifetime", "rmse_train", "rmse_val", "num_features"]),
            points.iter().map(|p| {
                vec![
                    format_f64(p.lifetime),
                    format_f64(p.rmse_train),
                    format_f64(p.rmse_val),
                    p.num_features.to_string(),
                ]
            }),
        ),
    }
}

/// Search trace. The CSV form has one `lambda_d` column per dimension.
pub fn trace(steps: &[TraceStep], dim: usize, format: Format) -> String {
    match format {
        Format::Json => json(steps),
        Format::Csv => {
            let mut header = vec!["step".to_string()];
            header.extend((0..dim).map(|d| format!("lambda_{d}")));
            header.extend(names(&["rmse_val", "move_dim", "move_dir"]));
            table(
                &header,
                steps.iter().map(|s| {
                    let mut row = vec![s.step.to_string()];
                    row.extend(s.lambdas.iter().map(|&l| format_f64(l)));
                    row.push(format_f64(s.rmse_val));
                    row.push(s.mv.dim.to_string());
                    row.push(serde_json::to_value(s.mv.dir).expect("enum").as_str().unwrap_or_default().to_string());
                    row
                }),
            )
        }
    }
}

pub fn compare(rows: &[CompareRow], format: Format) -> String {
    match format {
        Format::Json => json(rows),
        Format::Csv => table(
            &names(&["lifetime", "trees", "rmse_approx", "rmse_exact"]),
            rows.iter().map(|r| {
                vec![
                    format_f64(r.lifetime),
                    r.trees.to_string(),
                    format_f64(r.rmse_approx),
                    format_f64(r.rmse_exact),
                ]
            }),
        ),
    }
}

/// Verification reports: JSON lines, or a CSV table.
pub fn reports(reports: &[TestReport], format: Format) -> String {
    match format {
        Format::Json => json_lines(reports),
        Format::Csv => table(
            &names(&["name", "statistic", "p_value", "alpha", "passed", "n_samples"]),
            reports.iter().map(|r| {
                vec![
                    r.name.clone(),
                    format_f64(r.statistic),
                    format_f64(r.p_value),
                    format_f64(r.alpha),
                    r.passed.to_string(),
                    r.n_samples.to_string(),
                ]
            }),
        ),
    }
}

pub fn predictions(values: &[f64], format: Format) -> String {
    match format {
        Format::Json => json(values),
        Format::Csv => table(&names(&["prediction"]), values.iter().map(|&v| vec![format_f64(v)])),
    }
}
