//! Convergence experiments for the Cox-process particle filter: study
//! configuration, the replicate runner, slope fits and report writers.

pub mod checks;
pub mod cli;
pub mod config;
pub mod fit;
pub mod proposal;
pub mod report;
pub mod study;
pub mod svg;

pub use config::{ExperimentConfig, StudyPlan};
pub use fit::{fit_loglog_slope, FitError, RateFit};
pub use proposal::ProposalChoice;
pub use study::{run_convergence_study, workers_from_env, ConvergenceReport, ErrorCell, Measure};

use pfconv_core::SmcError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] SmcError),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("study aborted at {0}")]
    Aborted(String),
    #[error("study aborted at N={n}, replicate {replicate}: {source}")]
    StudyAborted {
        n: usize,
        replicate: usize,
        source: SmcError,
        report: Box<ConvergenceReport>,
    },
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
