//! φ-functions of scalars, dense matrices and large operators.

mod dense;
mod krylov;
mod operator;
mod scalar;

use thiserror::Error;

pub use dense::{expm, phi_dense};
pub use krylov::{arnoldi, phi_combination, KrylovBasis, KrylovOptions, PhiOutput};
pub use operator::{
    ApplyOnly, BandLu, BandMatrix, DenseOperator, LinearOperator, ShiftedSolver, ThomasFactor, Tridiagonal,
};
pub use scalar::{phi_scalar, phi_scalar_all, TAYLOR_SWITCH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhiError {
    #[error("φ evaluation out of range at z = {z}")]
    OutOfRange { z: f64 },
    #[error("matrix is not square ({rows}×{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite values in matrix function")]
    NonFinite,
    #[error("Krylov start vector is zero")]
    ZeroStartVector,
    #[error("vector length {found} does not match operator dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty φ combination")]
    EmptyCombination,
    #[error("step τ = {tau} must be positive")]
    InvalidStep { tau: f64 },
    #[error("Krylov iteration did not converge within {m_max} vectors (estimate {estimate:.3e})")]
    NotConverged { m_max: usize, estimate: f64 },
}
