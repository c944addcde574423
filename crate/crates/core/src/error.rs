//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the numerical kernels, the subproblem solvers and the
/// experiment layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}, tolerance {tol:.3e})")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("ill-conditioned system: {0}")]
    Conditioning(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate linearization for user {user}: expansion point has zero received power")]
    DegenerateLinearization { user: usize },

    #[error("degenerate user {user}: {reason}")]
    DegenerateUser { user: usize, reason: String },

    #[error("RIS power budget exhausted by noise terms (remaining budget {remaining:.3e} W)")]
    RisBudget { remaining: f64 },

    #[error("subproblem infeasible: {0}")]
    Infeasible(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("Gaussian randomization found no feasible candidate in {samples} draws")]
    Randomization {
        samples: usize,
        best_infeasible: Option<Vec<num_complex::Complex64>>,
    },

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
