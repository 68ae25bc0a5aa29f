//! Scalar expressions over upper variables `x1..xn` and lower variables
//! `y1..ym`, with exact symbolic first, second and third derivatives.
//!
//! Grammar, lowest to highest precedence:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := atom ('^' exponent)?          exponent: signed integer literal, right-assoc
//! atom    := number | x<k> | y<k> | func '(' sum ')' | '(' sum ')'
//! func    := sin | cos | exp | log | sqrt
//! ```
//!
//! ```
//! use bilocal::expr::{parse, diff, Var};
//!
//! let e = parse("x1^2 + y1^2", 1, 1).unwrap();
//! assert_eq!(diff(&e, Var::Y(0)).to_string(), "2*y1");
//! ```

mod compiled;
mod diff;
mod eval;
mod parse;
mod print;

pub use compiled::CompiledFunction;
pub use diff::diff;
pub use parse::parse;

use thiserror::Error;

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// A differentiation variable. Indices are zero-based; the text form is one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X(usize),
    Y(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    X(usize),
    Y(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Largest one-based x and y indices referenced.
    pub fn max_indices(&self) -> (usize, usize) {
        match self {
            Expr::Const(_) => (0, 0),
            Expr::X(i) => (i + 1, 0),
            Expr::Y(j) => (0, j + 1),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_indices(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let (ax, ay) = a.max_indices();
                let (bx, by) = b.max_indices();
                (ax.max(bx), ay.max(by))
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::X(_) | Expr::Y(_) => 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => 1 + a.node_count(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                1 + a.node_count() + b.node_count()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("variable {name} out of range (declared {declared})")]
    Index { name: String, declared: usize },
}

/// Evaluation left the function's domain.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{reason} in `{subexpr}`")]
pub struct DomainError {
    pub subexpr: String,
    pub reason: &'static str,
}
