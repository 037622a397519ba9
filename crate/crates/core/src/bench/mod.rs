//! Experiment driver: single runs, interval sweeps, latency percentiles and
//! the guarantee audit behind the command line.

mod audit;
mod experiment;
mod percentile;

pub use audit::{
    audit_guarantees, check_commit_before_delivery, AuditRequest, AuditSummary, CheckTally,
    SEQUENCE_CHECK_LIMIT,
};
pub use experiment::{
    append_results_csv, parse_results_csv, results_csv, run_experiment, sweep, ExperimentConfig, ExperimentReport,
    RecoveryReport, ResultRow, CSV_HEADER_COMMENT,
};
pub use percentile::{latency_report, nearest_rank, Percentiles};

use crate::pipelines::CorpusError;
use crate::sim::SimError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// Process exit code: 2 for bad configuration, 3 for a run that never
    /// settled, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::Sim(SimError::InvalidConfig(_)) | BenchError::Corpus(_) => 2,
            BenchError::Sim(SimError::Diverged { .. }) => 3,
            _ => 1,
        }
    }
}
