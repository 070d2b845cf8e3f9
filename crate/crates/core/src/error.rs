use alloc::string::String;

/// Errors raised by the numerical kernel and the analysis modules.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{what} must be square, got {rows}x{cols}")]
    NotSquare {
        what: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("{what} not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        what: &'static str,
        min_eigenvalue: f64,
    },
    #[error("{what} not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite {
        what: &'static str,
        min_eigenvalue: f64,
    },
    #[error("{what} is singular")]
    Singular { what: &'static str },
    #[error("matrix equation has no unique solution (singular Kronecker system)")]
    NoUniqueSolution,
    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
    },
    #[error("no invariant measure: state matrix is not Hurwitz ({diagnosis})")]
    NoInvariantMeasure { diagnosis: &'static str },
    #[error("Lyapunov certificate invalid at eps = {eps}")]
    InvalidCertificate { eps: f64 },
    #[error("inadmissible uncertainty class: Delta is not strictly below Psi (margin {margin:e})")]
    InadmissibleClass { margin: f64 },
    #[error("time grid must be strictly increasing (violated at index {index})")]
    InvalidGrid { index: usize },
    #[error("scheme mismatch: {0}")]
    SchemeMismatch(&'static str),
    #[error("mass matrix not positive definite at step {step}")]
    MassNotPositiveDefinite { step: usize },
    #[error("trajectory carries no realized force record")]
    MissingForceRecord,
    #[error("inadmissible paths in ensemble: {count} of {total}")]
    InadmissiblePaths { count: usize, total: usize },
    #[error("{what} inconsistent with finite differences (relative error {rel_error:e})")]
    InconsistentModel { what: &'static str, rel_error: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
