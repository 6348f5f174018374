use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The permittivity failed the coercivity audit at `point`.
    #[error("permittivity not admissible: smallest eigenvalue {min_eigenvalue:e} at {point:?}")]
    NotAdmissible { point: [f64; 3], min_eigenvalue: f64 },

    #[error("matrix is not positive definite ({0})")]
    Definiteness(String),

    /// Best residuals reached before the iteration budget ran out.
    #[error("eigensolver did not converge after {iterations} cycles (worst residual {worst:e})")]
    Convergence { iterations: usize, worst: f64, residuals: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dirichlet values cover ρ ≤ {covered:e} but the window needs ρ up to {needed:e}")]
    Coverage { covered: f64, needed: f64 },

    /// Entries whose family could not be decided; re-run with a shifted τ.
    #[error("ambiguous maxwell/gradient labels at indices {0:?}; re-run with a shifted tau")]
    NeedsTauShift(Vec<usize>),

    #[error("branch tracking failed at t = {t}: {reason}; refine the t-grid")]
    Tracking { t: f64, reason: String },

    #[error("no split found; best candidate `{best_candidate}` reached relative gap {best_gap:e}")]
    NoSplitFound { best_candidate: String, best_gap: f64 },

    #[error("expression error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
