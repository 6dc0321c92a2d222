//! Experiment harness for model-based active exploration: run configuration,
//! the exploration loop, sweeps with percentile aggregation, coverage maps,
//! checkpoints and the oracle self-checks behind `max-explore check`.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod coverage;
pub mod metrics;
pub mod output;
pub mod run;
pub mod sweep;

pub use config::{AgentKind, EnvSpec, RunConfig};
pub use coverage::{coverage_map, CoverageMap};
pub use metrics::{EpisodeRow, RunRecord, RunSummary};
pub use run::run_exploration;
pub use sweep::{run_sweep, Aggregate, SweepResult};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] max_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Core(max_core::Error::Validation(_)) => "validation",
            HarnessError::Core(max_core::Error::Numeric(_)) => "numeric",
            HarnessError::Core(max_core::Error::State(_)) => "state",
            HarnessError::Core(max_core::Error::Member { .. }) => "member",
            HarnessError::Io(_) => "io",
            HarnessError::Format(_) => "format",
        }
    }

    /// One-line JSON description, as written to error files and stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() })
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Format(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Format(e.to_string())
    }
}
