use thiserror::Error;

pub type Result<T> = std::result::Result<T, DhymError>;

#[derive(Debug, Error)]
pub enum DhymError {
    #[error("complex dimension {0} is not supported (expected 1, 2 or 3)")]
    Dimension(usize),

    #[error("matrix shape mismatch: {0}")]
    Shape(String),

    #[error("omega is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("comparison form is not positive definite (smallest eigenvalue {0:.3e})")]
    ComparisonForm(f64),

    #[error("phase data out of range: {0}")]
    Phase(String),

    #[error("index {index} out of range 1..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("cone violated at grid point {point}: eigenvalues {eigenvalues:?}, margin {margin:.3e}")]
    ConeViolation {
        point: usize,
        eigenvalues: Vec<f64>,
        margin: f64,
    },

    #[error("line search exhausted at step {step:.3e}")]
    StepFailure { step: f64 },

    #[error("linear solve stagnated: relative residual {residual:.3e} after {iterations} iterations")]
    LinearStagnation { residual: f64, iterations: usize },

    #[error("continuation stalled at t = {t:.6} (step {step:.3e}): {reason}")]
    NonConvergence { t: f64, step: f64, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
