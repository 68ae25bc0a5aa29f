use super::{check_len, Dims, ProblemError};

/// A point `u = (x, y, mu, xi)` of the KKT reformulation. Flattening order is
/// `(x, y, mu, xi)`. Iterates may carry negative `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PrimalDualPoint {
    pub fn new(x: &[f64], y: &[f64], mu: &[f64], xi: &[f64]) -> Self {
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            mu: mu.to_vec(),
            xi: xi.to_vec(),
        }
    }

    pub fn zeros(d: &Dims) -> Self {
        Self {
            x: vec![0.0; d.n],
            y: vec![0.0; d.m],
            mu: vec![0.0; d.r],
            xi: vec![0.0; d.s],
        }
    }

    pub fn check(&self, d: &Dims) -> Result<(), ProblemError> {
        check_len("x", d.n, self.x.len())?;
        check_len("y", d.m, self.y.len())?;
        check_len("mu", d.r, self.mu.len())?;
        check_len("xi", d.s, self.xi.len())
    }

    pub fn flatten(&self) -> Vec<f64> {
        [&self.x[..], &self.y, &self.mu, &self.xi].concat()
    }

    pub fn unflatten(d: &Dims, v: &[f64]) -> Result<Self, ProblemError> {
        check_len("u", d.primal_dual_len(), v.len())?;
        let (x, rest) = v.split_at(d.n);
        let (y, rest) = rest.split_at(d.m);
        let (mu, xi) = rest.split_at(d.r);
        Ok(Self::new(x, y, mu, xi))
    }
}

/// Multipliers of the KKT reformulation, `λ = (λ_H, λ_G, λ_𝓛, λ_h, λ_g)`.
///
/// The polar cone `K°` only constrains `λ_G >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperMultiplier {
    /// `λ_H`, for the upper equalities
    pub upper_eq: Vec<f64>,
    /// `λ_G`, for the upper inequalities
    pub upper_ineq: Vec<f64>,
    /// `λ_𝓛`, for lower stationarity `∇_y 𝓛 = 0`
    pub stationarity: Vec<f64>,
    /// `λ_h`, for the lower equalities
    pub lower_eq: Vec<f64>,
    /// `λ_g`, for the complementarity residual `g - Π(g + xi) = 0`
    pub complementarity: Vec<f64>,
}

impl UpperMultiplier {
    pub fn zeros(d: &Dims) -> Self {
        Self {
            upper_eq: vec![0.0; d.p],
            upper_ineq: vec![0.0; d.q],
            stationarity: vec![0.0; d.m],
            lower_eq: vec![0.0; d.r],
            complementarity: vec![0.0; d.s],
        }
    }

    pub fn check(&self, d: &Dims) -> Result<(), ProblemError> {
        check_len("lambda_H", d.p, self.upper_eq.len())?;
        check_len("lambda_G", d.q, self.upper_ineq.len())?;
        check_len("lambda_L", d.m, self.stationarity.len())?;
        check_len("lambda_h", d.r, self.lower_eq.len())?;
        check_len("lambda_g", d.s, self.complementarity.len())
    }

    pub fn flatten(&self) -> Vec<f64> {
        [
            &self.upper_eq[..],
            &self.upper_ineq,
            &self.stationarity,
            &self.lower_eq,
            &self.complementarity,
        ]
        .concat()
    }

    pub fn unflatten(d: &Dims, v: &[f64]) -> Result<Self, ProblemError> {
        check_len("lambda", d.multiplier_len(), v.len())?;
        let (a, rest) = v.split_at(d.p);
        let (b, rest) = rest.split_at(d.q);
        let (c, rest) = rest.split_at(d.m);
        let (e, f) = rest.split_at(d.r);
        Ok(Self {
            upper_eq: a.to_vec(),
            upper_ineq: b.to_vec(),
            stationarity: c.to_vec(),
            lower_eq: e.to_vec(),
            complementarity: f.to_vec(),
        })
    }

    /// Whether `λ ∈ K°`, i.e. `λ_G >= 0`.
    pub fn in_polar_cone(&self) -> bool {
        self.upper_ineq.iter().all(|v| *v >= 0.0)
    }
}
