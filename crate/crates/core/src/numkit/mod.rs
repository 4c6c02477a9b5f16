//! Numeric primitives shared by the solvers: containers, spectral routines,
//! simplex projection, scalar minimization and a limited-memory smooth
//! minimizer.

mod dense;
mod linop;
mod power;
mod scalar;
mod simplex;
mod smooth;

pub use dense::{frob_dot, frob_norm, spectral_norm, svd_small, sym_eigen, Svd, SymEigen, SVD_DIM_GUARD};
pub use linop::{LinearOperator, TripletMatrix};
pub use power::{top_singular_pair, PowerOptions, SingularTriple};
pub use scalar::{golden_section_min, ScalarMin};
pub use simplex::project_weighted_simplex;
pub use smooth::{
    minimize_newton_cg, minimize_smooth, SmoothOptions, SmoothResult, SmoothStatus,
};

use ndarray::Array2;
use thiserror::Error;

/// Row-major dense matrix of `f64`.
pub type DenseMatrix = Array2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("power iteration did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("dimension {dim} exceeds the dense guard of {guard}")]
    DimensionTooLarge { dim: usize, guard: usize },
    #[error("triple ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}
