use super::{Expr, Func, Var};

// Smart constructors: constant folding plus the 0/1 identities, nothing more.

pub(crate) fn c(v: f64) -> Expr {
    Expr::Const(v)
}

fn is(e: &Expr, v: f64) -> bool {
    e.as_const() == Some(v)
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(v) => c(-v),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => c(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => c(x - y),
        (_, Some(y)) if y == 0.0 => a,
        (Some(x), _) if x == 0.0 => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => c(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => c(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => c(x / y),
        (Some(x), _) if x == 0.0 => c(0.0),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn pow(a: Expr, k: i32) -> Expr {
    match (a.as_const(), k) {
        (_, 0) => c(1.0),
        (_, 1) => a,
        (Some(x), k) if x != 0.0 || k > 0 => c(x.powi(k)),
        _ => Expr::Pow(Box::new(a), k),
    }
}

fn call(func: Func, a: Expr) -> Expr {
    Expr::Call(func, Box::new(a))
}

/// Exact symbolic derivative of `e` with respect to `wrt`.
pub fn diff(e: &Expr, wrt: Var) -> Expr {
    match e {
        Expr::Const(_) => c(0.0),
        Expr::X(i) => c(if wrt == Var::X(*i) { 1.0 } else { 0.0 }),
        Expr::Y(j) => c(if wrt == Var::Y(*j) { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(diff(a, wrt)),
        Expr::Add(a, b) => add(diff(a, wrt), diff(b, wrt)),
        Expr::Sub(a, b) => sub(diff(a, wrt), diff(b, wrt)),
        Expr::Mul(a, b) => add(
            mul(diff(a, wrt), (**b).clone()),
            mul((**a).clone(), diff(b, wrt)),
        ),
        Expr::Div(a, b) => {
            let da = diff(a, wrt);
            let db = diff(b, wrt);
            if is(&db, 0.0) {
                div(da, (**b).clone())
            } else {
                div(
                    sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                    pow((**b).clone(), 2),
                )
            }
        }
        Expr::Pow(a, k) => {
            let da = diff(a, wrt);
            if *k == 0 || is(&da, 0.0) {
                return c(0.0);
            }
            mul(mul(c(*k as f64), pow((**a).clone(), k - 1)), da)
        }
        Expr::Call(func, a) => {
            let da = diff(a, wrt);
            if is(&da, 0.0) {
                return c(0.0);
            }
            let inner = (**a).clone();
            let outer = match func {
                Func::Sin => call(Func::Cos, inner),
                Func::Cos => neg(call(Func::Sin, inner)),
                Func::Exp => call(Func::Exp, inner),
                Func::Log => return div(da, inner),
                Func::Sqrt => return div(da, mul(c(2.0), call(Func::Sqrt, inner))),
            };
            mul(outer, da)
        }
    }
}
