//! Error types shared across the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Errors produced by operator construction, imbedding marches, and the
/// nonlinear continuation layers.
#[derive(Debug, Clone, Error)]
pub enum ImbedError {
    /// |d| fell at or below the configured singularity threshold. The
    /// offending parameter value is reported so the caller can detour
    /// around it or treat it as an eigenvalue candidate.
    #[error("determinant modulus {modulus:.3e} at lambda = {lambda} is at or below the singularity threshold")]
    Singularity { lambda: Complex64, modulus: f64 },

    /// The adaptive integrator could not meet its error target without
    /// shrinking the step below the configured minimum.
    #[error(
        "adaptive step stalled at lambda = {lambda}: required step below minimum {min_step:.3e}"
    )]
    StepSize { lambda: Complex64, min_step: f64 },

    /// An eigenvalue scan found no zero of d along the requested path.
    #[error("no zero of d was bracketed along the scan")]
    NoBracket,

    /// Newton iteration exhausted its budget without meeting the residual
    /// tolerance.
    #[error("Newton iteration did not converge at lambda = {lambda} after {iters} iterations (residual {residual:.3e})")]
    NonConvergence {
        lambda: Complex64,
        iters: usize,
        residual: f64,
    },

    /// A marched state violated the factorization residual bound, so the
    /// trajectory can no longer be trusted.
    #[error(
        "consistency residual {residual:.3e} at lambda = {lambda} exceeds tolerance {tol:.3e}"
    )]
    ConsistencyLost {
        lambda: Complex64,
        residual: f64,
        tol: f64,
    },

    /// A kernel was paired with a quadrature grid built on a different
    /// interval.
    #[error(
        "kernel domain [{kernel_a}, {kernel_b}] does not match grid domain [{grid_a}, {grid_b}]"
    )]
    DomainMismatch {
        kernel_a: f64,
        kernel_b: f64,
        grid_a: f64,
        grid_b: f64,
    },

    /// Construction-time validation failure (bad dimensions, non-finite
    /// entries, inconsistent derivative, malformed path, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl ImbedError {
    /// The parameter value attached to the error, when there is one.
    pub fn lambda(&self) -> Option<Complex64> {
        match self {
            ImbedError::Singularity { lambda, .. }
            | ImbedError::StepSize { lambda, .. }
            | ImbedError::NonConvergence { lambda, .. }
            | ImbedError::ConsistencyLost { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    /// Stable machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            ImbedError::Singularity { .. } => "singularity",
            ImbedError::StepSize { .. } => "step_size",
            ImbedError::NoBracket => "no_bracket",
            ImbedError::NonConvergence { .. } => "non_convergence",
            ImbedError::ConsistencyLost { .. } => "consistency_lost",
            ImbedError::DomainMismatch { .. } => "domain_mismatch",
            ImbedError::InvalidInput(_) => "invalid_input",
        }
    }
}

pub type Result<T> = std::result::Result<T, ImbedError>;
