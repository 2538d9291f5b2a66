//! Library side of the `mk` command-line tool: CSV datasets, the seeded
//! train/validation split, one function per experiment and their JSON/CSV
//! renderings. The binary in `main.rs` only parses flags and wires these
//! together.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod output;

pub use dataset::{ingest_csv, write_csv, Dataset, SplitSpec};
pub use error::{CliError, CliResult};
pub use output::Format;
