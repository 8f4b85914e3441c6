use thiserror::Error;

/// Errors surfaced by geometry construction, operator assembly, and the
/// spectral routines.  Numerical failures carry enough context to decide
/// whether a retry at a perturbed shift makes sense.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("boundary condition {bc:?} is not supported by the {scheme} restriction scheme")]
    IncompatibleScheme { bc: String, scheme: String },

    #[error("operator dimension {dim} exceeds the dense solver cap {cap}")]
    DenseCapExceeded { dim: usize, cap: usize },

    #[error("LDLT factorization broke down after {attempts} attempts; shifts tried: {shifts:?}")]
    FactorizationBreakdown { attempts: usize, shifts: Vec<f64> },

    #[error("iterative eigensolver did not converge: best residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
