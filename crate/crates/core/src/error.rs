use thiserror::Error;

/// Errors raised by state validation, spectrum extraction, filtering and
/// the survey driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("NotHermitian: max |rho - rho^dagger| = {deviation:.3e} exceeds tolerance {tol:.1e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("NotUnitTrace: trace = {trace:.17e} (|Tr - 1| > {tol:.1e})")]
    NotUnitTrace { trace: f64, tol: f64 },

    #[error("NotPositive: min eigenvalue = {min_eigenvalue:.3e} below -{tol:.1e}")]
    NotPositive { min_eigenvalue: f64, tol: f64 },

    #[error("NonFinite: matrix has NaN or infinite entries")]
    NonFinite,

    #[error("NonRealCorrelation: imaginary residue {residual:.3e} in Tr(rho s_i x s_j)")]
    NonRealCorrelation { residual: f64 },

    #[error("ComplexSpectrum: eigenvalue imaginary part {residual:.3e} exceeds {bound:.3e}")]
    ComplexSpectrum { residual: f64, bound: f64 },

    #[error("NegativeSpectrum: eigenvalue {value:.3e} is negative beyond {bound:.3e}")]
    NegativeSpectrum { value: f64, bound: f64 },

    #[error("SingularFilter: |det| = {abs_det:.3e} below {min_abs_det:.1e}")]
    SingularFilter { abs_det: f64, min_abs_det: f64 },

    #[error("FilterAnnihilates: success probability {probability:.3e}")]
    FilterAnnihilates { probability: f64 },

    #[error("ConvergenceFailure after {iterations} iterations (deviation {deviation:.3e}): {detail}")]
    ConvergenceFailure {
        iterations: usize,
        deviation: f64,
        detail: String,
    },

    #[error("WrongCase: {0}")]
    WrongCase(String),

    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),

    #[error("ConsistencyViolation: {0}")]
    ConsistencyViolation(String),

    #[error("UnknownMeasure: {0:?}")]
    UnknownMeasure(String),

    #[error("StateFile: {0}")]
    StateFile(String),
}

impl Error {
    /// Short variant name, printed by the CLI on the diagnostic stream.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotHermitian { .. } => "NotHermitian",
            Error::NotUnitTrace { .. } => "NotUnitTrace",
            Error::NotPositive { .. } => "NotPositive",
            Error::NonFinite => "NonFinite",
            Error::NonRealCorrelation { .. } => "NonRealCorrelation",
            Error::ComplexSpectrum { .. } => "ComplexSpectrum",
            Error::NegativeSpectrum { .. } => "NegativeSpectrum",
            Error::SingularFilter { .. } => "SingularFilter",
            Error::FilterAnnihilates { .. } => "FilterAnnihilates",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::WrongCase(_) => "WrongCase",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::ConsistencyViolation(_) => "ConsistencyViolation",
            Error::UnknownMeasure(_) => "UnknownMeasure",
            Error::StateFile(_) => "StateFile",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
