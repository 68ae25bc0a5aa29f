use super::{DomainError, Expr, Func};

fn domain(e: &Expr, reason: &'static str) -> DomainError {
    DomainError {
        subexpr: e.to_string(),
        reason,
    }
}

impl Expr {
    /// IEEE-754 evaluation at `(x, y)`.
    ///
    /// Panics if a variable index exceeds the supplied slices; problems are
    /// validated against their dimensions when they are built.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, DomainError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::X(i) => x[*i],
            Expr::Y(j) => y[*j],
            Expr::Neg(a) => -a.eval(x, y)?,
            Expr::Add(a, b) => a.eval(x, y)? + b.eval(x, y)?,
            Expr::Sub(a, b) => a.eval(x, y)? - b.eval(x, y)?,
            Expr::Mul(a, b) => a.eval(x, y)? * b.eval(x, y)?,
            Expr::Div(a, b) => {
                let num = a.eval(x, y)?;
                let den = b.eval(x, y)?;
                if den == 0.0 {
                    return Err(domain(self, "division by zero"));
                }
                num / den
            }
            Expr::Pow(a, k) => {
                let base = a.eval(x, y)?;
                if base == 0.0 && *k < 0 {
                    return Err(domain(self, "division by zero"));
                }
                base.powi(*k)
            }
            Expr::Call(func, a) => {
                let arg = a.eval(x, y)?;
                match func {
                    Func::Sin => arg.sin(),
                    Func::Cos => arg.cos(),
                    Func::Exp => arg.exp(),
                    Func::Log if arg <= 0.0 => return Err(domain(self, "log of a non-positive value")),
                    Func::Log => arg.ln(),
                    Func::Sqrt if arg < 0.0 => return Err(domain(self, "sqrt of a negative value")),
                    Func::Sqrt => arg.sqrt(),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(domain(self, "non-finite result"))
        }
    }
}
