//! Suite runner: executes the three methods over books, records one row per
//! training-and-testing event, retries runs, and aggregates the results
//! into summaries, accuracy histograms and accuracy-vs-factor tables.

mod config;
mod pipeline;
mod report;
mod results;
mod suite;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use config::{ExperimentConfig, RetryScope};
pub use pipeline::{
    pixel_tap, train_codebook, BookInput, ImageStore, MethodOutcome, MethodRunner, Pipeline, PIXEL_TAP_HEIGHT,
    PIXEL_TAP_WIDTH,
};
pub use report::{
    accuracy_vs_factor, best_attempts, factor_tsv, histogram_report, summarize, summary_tsv, Factor, FactorRow,
    Histogram, MethodSummary, Weighting,
};
pub use results::{load_results, read_results_csv, write_results_csv, RunResult, CSV_HEADER};
pub use suite::{
    apply_retry, retry_counts, run_book, run_suite, run_suite_with, RetryCounts, SuiteReport, RESULTS_FILE,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Pipeline(String),
    #[error("results line {line}: {msg}")]
    BadResults { line: usize, msg: String },
    #[error("nothing to summarize")]
    Empty,
    #[error("no books given")]
    NoBooks,
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub(crate) fn pipeline(e: impl fmt::Display) -> HarnessError {
        HarnessError::Pipeline(e.to_string())
    }
}

/// Classification method. The order (and CSV spelling) is `bovw`, `cnn`,
/// `tapped`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// SOM bag-of-visual-words histograms, nearest class mean.
    Bovw,
    /// End-to-end trained CNN.
    Cnn,
    /// Nearest class mean over tapped feature vectors.
    Tapped,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Bovw, Method::Cnn, Method::Tapped];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bovw => "bovw",
            Method::Cnn => "cnn",
            Method::Tapped => "tapped",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bovw" => Ok(Method::Bovw),
            "cnn" => Ok(Method::Cnn),
            "tapped" => Ok(Method::Tapped),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}
