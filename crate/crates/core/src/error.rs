use thiserror::Error;

/// Errors raised by the analysis routines.
///
/// Variant names are part of the CLI contract: they are printed verbatim when
/// a subcommand fails.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LapError {
    #[error("MissingConjugatePartner: offset {0:?} has no -m partner with H_-m = H_m^dagger")]
    MissingConjugatePartner(Vec<i64>),
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("NonFiniteEntry: hopping matrix for offset {0:?} contains NaN or infinity")]
    NonFiniteEntry(Vec<i64>),
    #[error("DuplicateOffset: offset {0:?} listed twice")]
    DuplicateOffset(Vec<i64>),
    #[error("ModelParse: line {line}: {message}")]
    ModelParse { line: usize, message: String },

    #[error("EigSolverFailure: {0}")]
    EigSolverFailure(String),
    #[error("ContourTouchesSpectrum: eigenvalue {eigenvalue} lies within {tol} of the contour")]
    ContourTouchesSpectrum { eigenvalue: f64, tol: f64 },
    #[error("GapClosure: band block gap collapsed at path index {0}")]
    GapClosure(usize),
    #[error("DegenerateBand: band {band} is not simple at k (gap {gap:e})")]
    DegenerateBand { band: usize, gap: f64 },

    #[error("HigherDegeneracy: more than two bands meet at k = {0:?}")]
    HigherDegeneracy(Vec<f64>),
    #[error("OutOfRange: r = {r} outside (-{limit}, {limit})")]
    OutOfRange { r: f64, limit: f64 },
    #[error("HypothesisViolated: {0}")]
    HypothesisViolated(String),
    #[error("InversionFailure: Newton inversion of h stagnated at residual {0:e}")]
    InversionFailure(f64),

    #[error("OverlapTooLarge: bumps sum to {0} > 1")]
    OverlapTooLarge(f64),
    #[error("BudgetExceeded: node cap {cap} reached with error estimate {error:e}")]
    BudgetExceeded { cap: usize, error: f64 },
    #[error("CriticalPointInWindow: |grad E| = {grad:e} at k = {k:?}")]
    CriticalPointInWindow { k: Vec<f64>, grad: f64 },
    #[error("NonCauchy: successive differences do not decrease ({0})")]
    NonCauchy(String),
    #[error("FitFailed: residual {residual} exceeds {limit}")]
    FitFailed { residual: f64, limit: f64 },
    #[error("ParameterOutOfRange: {0}")]
    ParameterOutOfRange(String),
    #[error("NewtonFailure: {0}")]
    NewtonFailure(String),
    #[error("PreconditionViolated: {0}")]
    PreconditionViolated(String),
}

impl LapError {
    /// Bare variant name, used for CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            LapError::MissingConjugatePartner(_) => "MissingConjugatePartner",
            LapError::DimensionMismatch(_) => "DimensionMismatch",
            LapError::NonFiniteEntry(_) => "NonFiniteEntry",
            LapError::DuplicateOffset(_) => "DuplicateOffset",
            LapError::ModelParse { .. } => "ModelParse",
            LapError::EigSolverFailure(_) => "EigSolverFailure",
            LapError::ContourTouchesSpectrum { .. } => "ContourTouchesSpectrum",
            LapError::GapClosure(_) => "GapClosure",
            LapError::DegenerateBand { .. } => "DegenerateBand",
            LapError::HigherDegeneracy(_) => "HigherDegeneracy",
            LapError::OutOfRange { .. } => "OutOfRange",
            LapError::HypothesisViolated(_) => "HypothesisViolated",
            LapError::InversionFailure(_) => "InversionFailure",
            LapError::OverlapTooLarge(_) => "OverlapTooLarge",
            LapError::BudgetExceeded { .. } => "BudgetExceeded",
            LapError::CriticalPointInWindow { .. } => "CriticalPointInWindow",
            LapError::NonCauchy(_) => "NonCauchy",
            LapError::FitFailed { .. } => "FitFailed",
            LapError::ParameterOutOfRange(_) => "ParameterOutOfRange",
            LapError::NewtonFailure(_) => "NewtonFailure",
            LapError::PreconditionViolated(_) => "PreconditionViolated",
        }
    }
}

pub type Result<T> = std::result::Result<T, LapError>;
