use super::{diff, DomainError, Expr, Var};
use crate::numerics::Matrix;

/// An expression bundled with its symbolic derivatives over the joint
/// variable `z = (x, y)`.
///
/// Besides gradient and Hessian, it carries the Hessians of each partial
/// `∂e/∂y_j`; the Hessian of the KKT-reformulation Lagrangian contains the
/// term `λᵀ ∇_y 𝓛`, whose second derivatives are third derivatives of the
/// lower-level functions.
#[derive(Debug, Clone)]
pub struct CompiledFunction {
    n: usize,
    m: usize,
    expr: Expr,
    grad: Vec<Expr>,
    // row-major (n+m)², exactly symmetric
    hess: Vec<Expr>,
    // per y_j: row-major (n+m)² Hessian of ∂e/∂y_j
    grad_y_hess: Vec<Vec<Expr>>,
}

fn joint_var(n: usize, a: usize) -> Var {
    if a < n {
        Var::X(a)
    } else {
        Var::Y(a - n)
    }
}

impl CompiledFunction {
    /// Differentiates `expr` symbolically over `n` upper and `m` lower variables.
    ///
    /// Panics if `expr` references variables beyond `(n, m)`.
    pub fn new(expr: Expr, n: usize, m: usize) -> Self {
        let (mx, my) = expr.max_indices();
        assert!(mx <= n && my <= m, "expression references undeclared variables");
        let d = n + m;
        let grad: Vec<Expr> = (0..d).map(|a| diff(&expr, joint_var(n, a))).collect();
        let hess = symmetric_hessian(&grad, n);
        let grad_y_hess = (0..m)
            .map(|j| hess.iter().map(|h| diff(h, Var::Y(j))).collect())
            .collect();
        Self {
            n,
            m,
            expr,
            grad,
            hess,
            grad_y_hess,
        }
    }

    pub fn parse(text: &str, n: usize, m: usize) -> Result<Self, super::ParseError> {
        Ok(Self::new(super::parse(text, n, m)?, n, m))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64, DomainError> {
        self.expr.eval(x, y)
    }

    /// Gradient over `(x, y)`.
    pub fn grad(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, DomainError> {
        self.grad.iter().map(|g| g.eval(x, y)).collect()
    }

    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, DomainError> {
        self.grad[..self.n].iter().map(|g| g.eval(x, y)).collect()
    }

    pub fn grad_y(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>, DomainError> {
        self.grad[self.n..].iter().map(|g| g.eval(x, y)).collect()
    }

    /// Joint Hessian over `(x, y)`.
    pub fn hess(&self, x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
        eval_square(&self.hess, self.n + self.m, x, y)
    }

    pub fn hess_xx(&self, x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
        Ok(self.hess(x, y)?.block(0, 0, self.n, self.n))
    }

    /// `∇²_{xy} e`, an `n x m` block.
    pub fn hess_xy(&self, x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
        Ok(self.hess(x, y)?.block(0, self.n, self.n, self.m))
    }

    /// `∇²_{yx} e`, an `m x n` block.
    pub fn hess_yx(&self, x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
        Ok(self.hess(x, y)?.block(self.n, 0, self.m, self.n))
    }

    pub fn hess_yy(&self, x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
        Ok(self.hess(x, y)?.block(self.n, self.n, self.m, self.m))
    }

    /// Joint Hessian over `(x, y)` of the partial derivative `∂e/∂y_j`.
    pub fn grad_y_hess(&self, j: usize, x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
        eval_square(&self.grad_y_hess[j], self.n + self.m, x, y)
    }
}

fn symmetric_hessian(grad: &[Expr], n: usize) -> Vec<Expr> {
    let d = grad.len();
    let mut hess = vec![Expr::Const(0.0); d * d];
    for a in 0..d {
        for b in a..d {
            let h = diff(&grad[a], joint_var(n, b));
            hess[b * d + a] = h.clone();
            hess[a * d + b] = h;
        }
    }
    hess
}

fn eval_square(entries: &[Expr], d: usize, x: &[f64], y: &[f64]) -> Result<Matrix, DomainError> {
    let data = entries.iter().map(|e| e.eval(x, y)).collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::from_row_major(d, d, data))
}
