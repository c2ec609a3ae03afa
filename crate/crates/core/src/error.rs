use thiserror::Error;

use crate::particles::Stage;

pub type Result<T, E = SmcError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SmcError {
    #[error("importance weight is not finite (log weight {log_weight}) at particle {index:?}")]
    WeightNotFinite { index: Option<usize>, log_weight: f64 },

    #[error("all importance weights are zero")]
    DegenerateWeights,

    #[error("operation requires stage {expected}, particle set is at stage {found}")]
    StageMismatch { expected: &'static str, found: Stage },

    #[error("weights are not normalised: sum is {sum}")]
    NotNormalized { sum: f64 },

    #[error("count vector has length {found_len} and total {found_total}, expected length {expected_len} and total {expected_total}")]
    CountMismatch {
        expected_len: usize,
        found_len: usize,
        expected_total: usize,
        found_total: usize,
    },

    #[error("argument outside the state domain: {0}")]
    Domain(String),

    #[error("gamma function has a pole at {0}")]
    Pole(f64),

    #[error("grid density has zero mass after {0}")]
    ZeroMass(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("at step t={t}: {source}")]
    AtStep {
        t: usize,
        #[source]
        source: Box<SmcError>,
    },

    #[error("observation file: {0}")]
    Io(String),
}

impl SmcError {
    pub(crate) fn at_step(self, t: usize) -> Self {
        SmcError::AtStep {
            t,
            source: Box::new(self),
        }
    }
}
