//! Cliff-aware dataset splitting, severity scoring and severity-weighted
//! training for molecular property regression.
//!
//! The pipeline, in order:
//!
//! 1. [`fingerprint`]: bit fingerprints from structures, Tanimoto similarity
//!    and an exact pruned similarity index.
//! 2. [`pairgen`]: τ-similar pairs, rank-percentile property gaps and the
//!    joint cliff score.
//! 3. [`cliffgraph`]: a degree-capped cliff graph and a train/val/test split
//!    that never puts both ends of a cliff edge in test.
//! 4. [`severity`]: per-molecule severity against the training set.
//! 5. [`trainer`]: severity-weighted training with an adaptive cliff weight.
//! 6. [`diagnostics`]: severity-conditioned metrics and split-shift checks.

pub mod cliffgraph;
pub mod config;
pub mod dataio;
pub mod diagnostics;
pub mod fingerprint;
pub mod pairgen;
pub mod pipeline;
pub mod severity;
pub mod stats;
pub mod synth;
pub mod trainer;

use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] dataio::DataError),
    #[error(transparent)]
    Fingerprint(#[from] fingerprint::FingerprintError),
    #[error(transparent)]
    PairGen(#[from] pairgen::PairGenError),
    #[error(transparent)]
    Split(#[from] cliffgraph::SplitError),
    #[error(transparent)]
    Severity(#[from] severity::SeverityError),
    #[error(transparent)]
    Train(#[from] trainer::TrainError),
    #[error(transparent)]
    Diagnostics(#[from] diagnostics::DiagnosticsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

/// Coarse error classes, one per process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input data, schema or configuration.
    Input,
    /// The constraints cannot be met on this input.
    Infeasible,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use cliffgraph::SplitError;
        use diagnostics::DiagnosticsError;
        use trainer::TrainError;
        match self {
            Error::Split(SplitError::Infeasible(_)) | Error::Train(TrainError::ControllerStarvation(_)) => {
                ErrorClass::Infeasible
            }
            Error::Train(TrainError::Dimension(_)) | Error::Diagnostics(DiagnosticsError::Dimension(_)) => {
                ErrorClass::Internal
            }
            Error::Severity(severity::SeverityError::Config(_)) => ErrorClass::Input,
            Error::Severity(_) | Error::Internal(_) => ErrorClass::Internal,
            _ => ErrorClass::Input,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes() {
        let infeasible: Error = cliffgraph::SplitError::Infeasible("x".into()).into();
        assert_eq!(infeasible.class(), ErrorClass::Infeasible);
        let starved: Error = trainer::TrainError::ControllerStarvation("x".into()).into();
        assert_eq!(starved.class(), ErrorClass::Infeasible);
        let dim: Error = trainer::TrainError::Dimension("x".into()).into();
        assert_eq!(dim.class(), ErrorClass::Internal);
        assert_eq!(Error::Internal("x".into()).class(), ErrorClass::Internal);
        assert_eq!(Error::Config("x".into()).class(), ErrorClass::Input);
        let model: Error = trainer::TrainError::Model("x".into()).into();
        assert_eq!(model.class(), ErrorClass::Input);
    }
}
