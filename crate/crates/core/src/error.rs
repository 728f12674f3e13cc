//! Error type shared by all modules of the crate.

/// Errors produced by model construction, sampling, field evaluation and
/// diagnostics.
#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum GapError {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A requested cutoff or enumeration would exceed the mode budget.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// The operation is not defined for this model kind.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// The wave function is (numerically) zero at the requested point, so a
    /// quantity that divides by |psi|^2 is undefined there.
    #[error("node at q = {location:?} (|psi|^2 = {psi_sq:.3e} below threshold {threshold:.3e})")]
    Node {
        location: Vec<f64>,
        psi_sq: f64,
        threshold: f64,
    },

    /// Analytic continuation was requested in a strip where the truncated
    /// expansion can no longer be trusted.
    #[error("strip divergence: tail estimate {tail_estimate:.3e} exceeds tolerance {tolerance:.3e}")]
    StripDivergence { tail_estimate: f64, tolerance: f64 },

    /// Reading or writing an artifact failed.
    #[error("i/o error: {0}")]
    Io(String),

    /// A persisted artifact does not match the expected layout or the
    /// spectrum it claims to describe.
    #[error("format error: {0}")]
    Format(String),

    /// An internal invariant failed (should not happen on valid inputs).
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<std::io::Error> for GapError {
    fn from(err: std::io::Error) -> Self {
        GapError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GapError>;
