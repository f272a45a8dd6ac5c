use thiserror::Error;

pub type Result<T> = std::result::Result<T, QuenchError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuenchError {
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid quench specification: {0}")]
    InvalidSpec(String),

    #[error("alpha matrix is numerically singular (condition number {condition:.3e})")]
    SingularAlpha { condition: f64 },

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("fluctuation ratio undefined: |E_M(0) - mean| = {gap:.3e}")]
    DegenerateInitial { gap: f64 },

    #[error("vacuum-polarization denominator vanishes for joint mode {mode}")]
    DivisionByZero { mode: usize },

    #[error("truncated Fock basis too small: {0}")]
    CutoffExceeded(String),

    #[error("wrong covariance basis: expected {expected}, found {found}")]
    Basis { expected: String, found: String },
}
