//! Small dense numerical kernels shared by the rest of the crate.
//!
//! Everything here is sized for problems with at most a few hundred
//! unknowns: dense LU with partial pivoting, column-pivoted QR for rank and
//! null spaces, Jacobi eigen/singular values, a bounded-variable simplex for
//! the constraint-qualification LP, and central finite differences.

mod eigen;
mod fd;
mod lp;
mod lu;
mod matrix;
mod qr;

pub use eigen::{min_eig_sym, singular_values, sym_eigen, SYMMETRY_TOL};
pub use fd::{
    fd_gradient, fd_jacobian, try_fd_hessian_of_gradient, try_fd_jacobian, FD_STEP_FIRST,
    FD_STEP_SECOND,
};
pub use lp::{lp_maximize, LpProblem, LpSolution, INFEASIBILITY_TOL};
pub use lu::{lu_solve, Lu, SINGULAR_PIVOT_REL};
pub use matrix::{axpy, dot, norm2, norm_inf, sub_vec, Matrix};
pub use qr::{nullspace_basis, rank};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is singular: pivot {pivot:e} in column {column}")]
    Singular { pivot: f64, column: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("LP is infeasible (phase-1 optimum {phase1:e})")]
    Infeasible { phase1: f64 },
    #[error("LP is unbounded")]
    Unbounded,
    #[error("invalid bounds [{lower}, {upper}]")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("function returned a non-finite value")]
    NonFinite,
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
}
