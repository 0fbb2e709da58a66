use thiserror::Error;

use crate::linalg::LinalgError;
use crate::problem::ValidationReport;

pub type Result<T> = std::result::Result<T, UsdError>;

#[derive(Debug, Error, Clone)]
pub enum UsdError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error("invalid input: {0}")]
    Invalid(ValidationReport),

    #[error(
        "supports of rho0 and rho1 overlap (rank {rank0} + {rank1} > rank of the sum {rank_sum})"
    )]
    OverlappingSupports {
        rank0: usize,
        rank1: usize,
        rank_sum: usize,
    },

    #[error("rank conditions fail (min eigenvalues {op0_min_eig:e}, {op1_min_eig:e})")]
    RankConditionsFail { op0_min_eig: f64, op1_min_eig: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFail(String),

    #[error("degenerate bound: {0}")]
    DegenerateBound(String),

    #[error("optimality certificate rejected: {0}")]
    CertificateRejected(ValidationReport),

    #[error(
        "kernel operator spectrum {eigenvalues:?} lacks one positive and one negative eigenvalue"
    )]
    SpectrumAnomaly { eigenvalues: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed document: {0}")]
    Format(String),

    #[error("bisection bracket [{low}, {high}] does not change sign ({f_low:e}, {f_high:e})")]
    BracketFail {
        low: f64,
        high: f64,
        f_low: f64,
        f_high: f64,
    },

    #[error("at mu = {mu}: {source}")]
    AtMu {
        mu: f64,
        #[source]
        source: Box<UsdError>,
    },
}

impl UsdError {
    /// Errors that mean the input itself was unacceptable, as opposed to a
    /// numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        match self {
            UsdError::Invalid(_)
            | UsdError::OverlappingSupports { .. }
            | UsdError::RankConditionsFail { .. }
            | UsdError::PreconditionFail(_)
            | UsdError::DegenerateBound(_)
            | UsdError::Domain(_)
            | UsdError::Format(_) => true,
            UsdError::Linalg(e) => !matches!(e, LinalgError::NoConvergence { .. }),
            UsdError::AtMu { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
