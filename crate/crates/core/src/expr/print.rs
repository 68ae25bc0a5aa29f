use std::fmt;

use super::Expr;

// binding strength used to decide where parentheses are required
const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const UNARY: u8 = 3;
const ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => SUM,
        Expr::Mul(..) | Expr::Div(..) => PRODUCT,
        Expr::Neg(_) => UNARY,
        Expr::Const(c) if c.is_sign_negative() => UNARY,
        Expr::Pow(..) => 4,
        Expr::Const(_) | Expr::X(_) | Expr::Y(_) | Expr::Call(..) => ATOM,
    }
}

fn child(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Prints with the fewest parentheses that still reparse to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::Y(j) => write!(f, "y{}", j + 1),
            Expr::Neg(a) => {
                f.write_str("-")?;
                child(f, a, precedence(a) < UNARY)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let op = if matches!(self, Expr::Add(..)) { " + " } else { " - " };
                child(f, a, precedence(a) < SUM)?;
                f.write_str(op)?;
                child(f, b, precedence(b) <= SUM)
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = if matches!(self, Expr::Mul(..)) { "*" } else { "/" };
                child(f, a, precedence(a) < PRODUCT)?;
                f.write_str(op)?;
                child(f, b, precedence(b) <= PRODUCT)
            }
            Expr::Pow(a, k) => {
                child(f, a, precedence(a) < ATOM)?;
                write!(f, "^{k}")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
