//! Configuration-driven experiment harness for the variance-aware optimizer
//! family: seeded training runs over the digit dataset or synthetic quadratic
//! populations, CSV metrics, SVG comparison plots, an identity-check suite
//! and a dataset fetcher.

use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod fetch;
pub mod metrics;
pub mod plot;
pub mod runner;
pub mod verify;

pub use config::{default_eta, DatasetChoice, ExperimentConfig, ModelChoice, Overrides};
pub use metrics::{
    aggregate, fmt_sig, read_metrics_csv, write_metrics_csv, EpochAggregate, Metric,
    MetricsRecord,
};
pub use plot::{emit_plot_svg, Series};
pub use runner::{load_data, run_experiment, Divergence, ExperimentData, RunOutput};
pub use verify::{run_identity_suite, IdentityCheck};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path} line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no records to aggregate")]
    NoRecords,
    #[error("seeds {seed_a} and {seed_b} report different epoch sets")]
    InconsistentEpochs { seed_a: u64, seed_b: u64 },
    #[error("dataset file {file} not found under {dir} (run `varadam fetch-mnist --out {dir}`)", dir = .dir.display())]
    DatasetMissing { dir: PathBuf, file: String },
    #[error("no series to plot")]
    EmptySeries,
    #[error("fetching {url}: {message}")]
    Fetch { url: String, message: String },
    #[error("{file}: checksum mismatch, expected {expected}, got {actual}")]
    ChecksumMismatch {
        file: String,
        expected: String,
        actual: String,
    },
    #[error(transparent)]
    Data(#[from] varadam::DataError),
    #[error(transparent)]
    Model(#[from] varadam::ModelError),
    #[error(transparent)]
    Optim(#[from] varadam::OptimError),
    #[error(transparent)]
    Oracle(#[from] varadam::OracleError),
}
