//! Crate error type.

use alloc::string::String;

use crate::model::ValidationReport;

/// Errors surfaced by the simulation and analysis layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    /// A caller-supplied value violates an operation's preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A protocol sequence failed shape validation; the report lists every
    /// violation found.
    #[error("invalid pulse sequence: {0}")]
    SequenceInvalid(ValidationReport),

    /// The integrator left the physical manifold (trace or diagonal bounds)
    /// beyond tolerance.
    #[error("integration diverged at t = {t_us} us: {message}")]
    IntegrationDiverged { t_us: f64, message: String },

    /// Phase-matching geometry with a vanishing output wave vector.
    #[error("degenerate phase-matching geometry: |k_E| ~ 0")]
    DegenerateGeometry,

    /// Efficiency requested against a zero reference echo.
    #[error("zero reference echo amplitude")]
    ZeroReference,

    /// A decay fit that cannot produce a positive time constant.
    #[error("degenerate decay fit: {0}")]
    DegenerateFit(String),
}

impl CoreError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidArgument(msg.into())
    }
}
