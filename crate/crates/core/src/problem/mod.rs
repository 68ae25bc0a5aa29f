//! The bilevel problem model.
//!
//! ```text
//! min_{x,y}  F(x,y)   s.t.  H(x,y) = 0,  G(x,y) <= 0,  y ∈ argmin_y { f(x,y) : h(x,y) = 0, g(x,y) <= 0 }
//! ```
//!
//! with `x ∈ ℝⁿ`, `y ∈ ℝᵐ`, `H: p`, `G: q`, `h: r`, `g: s` components.
//! Constraint order is file order; every index set elsewhere in the crate
//! refers to these positions.

mod file;
mod fixtures;
mod point;

pub use file::load_problem;
pub use fixtures::{fixture, fixture_names, fixture_solution, fixture_text};
pub use point::{PrimalDualPoint, UpperMultiplier};

use thiserror::Error;

use crate::expr::{CompiledFunction, DomainError, ParseError};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: ParseError },
    #[error("unknown fixture `{0}` (known: P1, P2, P3, P4)")]
    UnknownFixture(String),
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// Sizes of every block of a bilevel problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    /// upper equalities `H`
    pub p: usize,
    /// upper inequalities `G`
    pub q: usize,
    /// lower equalities `h`
    pub r: usize,
    /// lower inequalities `g`
    pub s: usize,
}

impl Dims {
    /// Length of `u = (x, y, mu, xi)`.
    pub fn primal_dual_len(&self) -> usize {
        self.n + self.m + self.r + self.s
    }

    /// Length of `λ = (λ_H, λ_G, λ_𝓛, λ_h, λ_g)`.
    pub fn multiplier_len(&self) -> usize {
        self.p + self.q + self.m + self.r + self.s
    }

    /// Size of the lower KKT system `(y, mu, xi)`.
    pub fn kkt_len(&self) -> usize {
        self.m + self.r + self.s
    }
}

#[derive(Debug, Clone)]
pub struct BilevelProblem {
    n: usize,
    m: usize,
    upper_objective: CompiledFunction,
    upper_eq: Vec<CompiledFunction>,
    upper_ineq: Vec<CompiledFunction>,
    lower_objective: CompiledFunction,
    lower_eq: Vec<CompiledFunction>,
    lower_ineq: Vec<CompiledFunction>,
}

impl BilevelProblem {
    /// Assembles a problem; panics if a function was compiled for other dimensions.
    pub fn new(
        n: usize,
        m: usize,
        upper_objective: CompiledFunction,
        upper_eq: Vec<CompiledFunction>,
        upper_ineq: Vec<CompiledFunction>,
        lower_objective: CompiledFunction,
        lower_eq: Vec<CompiledFunction>,
        lower_ineq: Vec<CompiledFunction>,
    ) -> Self {
        let all = std::iter::once(&upper_objective)
            .chain(&upper_eq)
            .chain(&upper_ineq)
            .chain(std::iter::once(&lower_objective))
            .chain(&lower_eq)
            .chain(&lower_ineq);
        for f in all {
            assert_eq!(f.dims(), (n, m), "function compiled for different dimensions");
        }
        Self {
            n,
            m,
            upper_objective,
            upper_eq,
            upper_ineq,
            lower_objective,
            lower_eq,
            lower_ineq,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.n,
            m: self.m,
            p: self.upper_eq.len(),
            q: self.upper_ineq.len(),
            r: self.lower_eq.len(),
            s: self.lower_ineq.len(),
        }
    }

    /// `F`
    pub fn upper_objective(&self) -> &CompiledFunction {
        &self.upper_objective
    }

    /// `H`
    pub fn upper_eq(&self) -> &[CompiledFunction] {
        &self.upper_eq
    }

    /// `G`
    pub fn upper_ineq(&self) -> &[CompiledFunction] {
        &self.upper_ineq
    }

    /// `f`
    pub fn lower_objective(&self) -> &CompiledFunction {
        &self.lower_objective
    }

    /// `h`
    pub fn lower_eq(&self) -> &[CompiledFunction] {
        &self.lower_eq
    }

    /// `g`
    pub fn lower_ineq(&self) -> &[CompiledFunction] {
        &self.lower_ineq
    }

    /// Checks the lengths of `x` and `y`.
    pub fn check_xy(&self, x: &[f64], y: &[f64]) -> Result<(), ProblemError> {
        check_len("x", self.n, x.len())?;
        check_len("y", self.m, y.len())
    }

    /// The problem in the line-oriented file format; `load_problem` reads it back.
    pub fn to_problem_text(&self) -> String {
        let mut out = format!("dims n={} m={}\n", self.n, self.m);
        let mut line = |key: &str, f: &CompiledFunction| {
            out.push_str(key);
            out.push(' ');
            out.push_str(&f.expr().to_string());
            out.push('\n');
        };
        line("upper.objective", &self.upper_objective);
        self.upper_eq.iter().for_each(|f| line("upper.eq", f));
        self.upper_ineq.iter().for_each(|f| line("upper.ineq", f));
        line("lower.objective", &self.lower_objective);
        self.lower_eq.iter().for_each(|f| line("lower.eq", f));
        self.lower_ineq.iter().for_each(|f| line("lower.ineq", f));
        out
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), ProblemError> {
    if expected == found {
        Ok(())
    } else {
        Err(ProblemError::DimensionMismatch { what, expected, found })
    }
}

/// Values of a list of functions.
pub fn eval_all(fs: &[CompiledFunction], x: &[f64], y: &[f64]) -> Result<Vec<f64>, DomainError> {
    fs.iter().map(|f| f.value(x, y)).collect()
}

/// Jacobian of a list of functions over the joint variable `(x, y)`.
pub fn jacobian(fs: &[CompiledFunction], x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
    let rows = fs.iter().map(|f| f.grad(x, y)).collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::from_row_vecs(&rows, x.len() + y.len()))
}

/// `𝒥_y` of a list of functions (`k x m`).
pub fn jacobian_y(fs: &[CompiledFunction], x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
    let rows = fs.iter().map(|f| f.grad_y(x, y)).collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::from_row_vecs(&rows, y.len()))
}

/// `𝒥_x` of a list of functions (`k x n`).
pub fn jacobian_x(fs: &[CompiledFunction], x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
    let rows = fs.iter().map(|f| f.grad_x(x, y)).collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::from_row_vecs(&rows, x.len()))
}
