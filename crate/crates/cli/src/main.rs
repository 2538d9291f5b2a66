use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mondrian::forest::GaussianParams;
use mondrian::grid::Optimizer;
use mondrian::verify::{DEFAULT_ALPHA, SUITES};
use serde::Serialize;
use serde_json::json;

use mondrian_cli::dataset::{ingest_csv, ingest_features, SplitSpec};
use mondrian_cli::{commands, output, CliError, CliResult, Format};

const DEFAULT_SPLIT: f64 = 0.8;
const DEFAULT_DELTA: f64 = 1.0;
const DEFAULT_TREES: usize = 10;
const DEFAULT_BUDGET: usize = 20;

/// Mondrian forests, Mondrian kernel paths and Mondrian grid search.
///
/// Every command is a pure function of its flags, input files and seed.
/// Results go to stdout (or --out); a one-line JSON provenance header with
/// the effective settings goes to stderr.
#[derive(Parser, Debug)]
#[command(name = "mk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Sample one Mondrian process on a box and print the tree as JSON.
    Sample(SampleArgs),
    /// Forward regularization path of a Mondrian forest.
    ForestPath(ForestPathArgs),
    /// Backward regularization path of the Mondrian kernel approximation.
    KernelPath(KernelPathArgs),
    /// Greedy lifetime search on a Mondrian grid.
    GridSearch(GridSearchArgs),
    /// Approximate versus exact Laplace-kernel ridge regression.
    CompareExact(CompareArgs),
    /// Run statistical checks of the samplers; exits 3 if any fails.
    Verify(VerifyArgs),
    /// Train a forest on all rows and predict query points.
    Predict(PredictArgs),
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// CSV file with numeric columns.
    #[arg(long)]
    data: PathBuf,
    /// Target column: header name or 0-based index. Defaults to the last column.
    #[arg(long, default_value = "")]
    target: String,
    /// The first line is data, not a header.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    /// Fraction of rows used for training; the rest is validation.
    #[arg(long, default_value_t = DEFAULT_SPLIT)]
    split: f64,
}

#[derive(Args, Debug, Serialize)]
struct OutArgs {
    /// Write results here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct PriorArgs {
    /// Prior mean of leaf values (default: training target mean).
    #[arg(long)]
    prior_mean: Option<f64>,
    /// Prior variance of leaf values (default: training target variance).
    #[arg(long)]
    prior_var: Option<f64>,
    /// Observation noise variance (default: half the target variance).
    #[arg(long)]
    noise_var: Option<f64>,
}

impl PriorArgs {
    fn resolve(&self, y: &[f64]) -> CliResult<Option<GaussianParams>> {
        if self.prior_mean.is_none() && self.prior_var.is_none() && self.noise_var.is_none() {
            return Ok(None);
        }
        let base = GaussianParams::from_targets(y)?;
        Ok(Some(GaussianParams::new(
            self.prior_mean.unwrap_or(base.prior_mean),
            self.prior_var.unwrap_or(base.prior_var),
            self.noise_var.unwrap_or(base.noise_var),
        )?))
    }
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    /// Box as lo:hi per dimension, comma separated, e.g. 0:1,0:2.
    #[arg(long = "box")]
    bbox: String,
    #[arg(long)]
    lifetime: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ForestPathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, default_value_t = DEFAULT_TREES)]
    trees: usize,
    #[arg(long)]
    lifetime: f64,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct KernelPathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, default_value_t = DEFAULT_TREES)]
    trees: usize,
    #[arg(long)]
    lifetime: f64,
    /// Ridge regularization strength.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum OptimizerArg {
    Greedy,
    Bidir,
}

impl From<OptimizerArg> for Optimizer {
    fn from(o: OptimizerArg) -> Self {
        match o {
            OptimizerArg::Greedy => Optimizer::Greedy,
            OptimizerArg::Bidir => Optimizer::Bidirectional,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct GridSearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Number of independent grids.
    #[arg(long, default_value_t = DEFAULT_TREES)]
    trees: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Greedy)]
    optimizer: OptimizerArg,
    /// Maximum number of committed moves.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Lifetimes to compare at, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    lifetime: Vec<f64>,
    /// Forest sizes to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 25, 100])]
    trees: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    suite: String,
    #[arg(long)]
    seed: u64,
    /// Significance level of every check.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    /// CSV of query points with the same feature columns, no target.
    #[arg(long)]
    query: PathBuf,
    /// The query file's first line is data, not a header.
    #[arg(long)]
    query_no_header: bool,
    #[arg(long, default_value_t = DEFAULT_TREES)]
    trees: usize,
    #[arg(long)]
    lifetime: f64,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Runtime(format!("cannot write to stdout: {e}")))
        }
    }
}

fn provenance(command: &Command) {
    let header = json!({
        "tool": "mk",
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "defaults": {
            "split": DEFAULT_SPLIT,
            "delta": DEFAULT_DELTA,
            "trees": DEFAULT_TREES,
            "budget": DEFAULT_BUDGET,
            "alpha": DEFAULT_ALPHA,
            "format": Format::Json,
        },
        "command": command,
    });
    eprintln!("{header}");
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("MK_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("MK_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("cannot configure thread pool: {e}")))
}

fn split_spec(split: &SplitArgs, seed: u64) -> CliResult<SplitSpec> {
    SplitSpec::new(split.split, seed)
}

fn run(command: &Command) -> CliResult<()> {
    match command {
        Command::Sample(a) => {
            let bbox = commands::parse_box(&a.bbox)?;
            let tree = commands::sample(&bbox, a.lifetime, a.seed)?;
            emit(&format!("{}\n", tree.to_json()), a.out.as_deref())
        }
        Command::ForestPath(a) => {
            let data = ingest_csv(&a.data.data, &a.data.target, !a.data.no_header)?;
            let split = split_spec(&a.split, a.seed)?;
            let is_train = split.assign(data.len())?;
            let train_y: Vec<f64> = (0..data.len()).filter(|&i| is_train[i]).map(|i| data.y[i]).collect();
            let params = a.prior.resolve(&train_y)?;
            let path = commands::forest_path(&data, &split, a.trees, a.lifetime, params, a.seed)?;
            emit(&output::forest_path(&path, a.out.format), a.out.out.as_deref())
        }
        Command::KernelPath(a) => {
            let data = ingest_csv(&a.data.data, &a.data.target, !a.data.no_header)?;
            let split = split_spec(&a.split, a.seed)?;
            let path = commands::kernel_path(&data, &split, a.trees, a.lifetime, a.delta, a.seed)?;
            emit(&output::kernel_path(&path, a.out.format), a.out.out.as_deref())
        }
        Command::GridSearch(a) => {
            let data = ingest_csv(&a.data.data, &a.data.target, !a.data.no_header)?;
            let split = split_spec(&a.split, a.seed)?;
            let result = commands::grid_search(&data, &split, a.trees, a.optimizer.into(), a.budget, a.delta, a.seed)?;
            eprintln!("{}", json!({ "selected_features": result.selected }));
            emit(&output::trace(&result.trace, data.dim(), a.out.format), a.out.out.as_deref())
        }
        Command::CompareExact(a) => {
            let data = ingest_csv(&a.data.data, &a.data.target, !a.data.no_header)?;
            let split = split_spec(&a.split, a.seed)?;
            let rows = commands::compare_exact(&data, &split, &a.lifetime, a.delta, &a.trees, a.seed)?;
            emit(&output::compare(&rows, a.out.format), a.out.out.as_deref())
        }
        Command::Verify(a) => {
            let reports = commands::verify(&a.suite, a.seed, a.alpha)?;
            emit(&output::reports(&reports, a.out.format), a.out.out.as_deref())?;
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::VerifyFailed {
                    failed,
                    total: reports.len(),
                });
            }
            Ok(())
        }
        Command::Predict(a) => {
            let data = ingest_csv(&a.data.data, &a.data.target, !a.data.no_header)?;
            let query = ingest_features(&a.query, !a.query_no_header)?;
            let params = a.prior.resolve(&data.y)?;
            let result = commands::predict(&data, &query, a.trees, a.lifetime, params, a.seed)?;
            if result.clamped > 0 {
                eprintln!(
                    "{}",
                    json!({ "warning": "query points outside the training box were clamped", "clamped": result.clamped })
                );
            }
            emit(&output::predictions(&result.values, a.out.format), a.out.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|_| {
        provenance(&cli.command);
        run(&cli.command)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
