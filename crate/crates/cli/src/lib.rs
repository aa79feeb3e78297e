//! Experiment runner behind the `schl` binary.

pub mod config;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{run_experiment, Command, RunOptions, RunSummary};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SCHL_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Contamination(String),
    #[error("{0}")]
    Divergence(String),
    #[error("checks failed: {0}")]
    Checks(String),
    #[error(transparent)]
    Core(#[from] schl::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use schl::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Contamination(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Core(e) => match e {
                E::BoundaryContamination { .. } => 3,
                E::Divergence(_) | E::NonFinite(_) => 4,
                E::InvalidParameter(_)
                | E::Dimension(_)
                | E::NonPowerOfTwo(_)
                | E::BoxLength(_)
                | E::MemoryBudget { .. }
                | E::ProbeWidth { .. }
                | E::Unsupported(_) => 2,
                _ => 1,
            },
            _ => 1,
        }
    }
}
