//! The classical augmented Lagrangian method on the KKT reformulation.
//!
//! With `c = (H, ∇_y 𝓛, h, g - Π(g + xi))` the equality-type constraints,
//!
//! ```text
//! L_ρ(u; λ) = F + Σ (λ_cᵀ c + ρ/2 ‖c‖²) + 1/(2ρ) (‖max(0, λ_G + ρ G)‖² - ‖λ_G‖²)
//! ```
//!
//! Each outer iteration minimizes `L_ρ(·; λ^k)` to `‖∇L_ρ‖ <= ε_k` with
//! `ε_k = psi_coeff · σ_k^1.5`, checks the step against `ĉ · σ_k`, and sets
//! `λ^{k+1} = Π_{K°}(λ^k + ρ G̃(u^{k+1}))`.

use thiserror::Error;

use crate::numerics::{dot, norm2, norm_inf};
use crate::optimality::{fp_constraints, fp_lagrangian_grad, natural_residual, OptimalityError};
use crate::problem::{BilevelProblem, PrimalDualPoint, UpperMultiplier};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlmError {
    #[error(transparent)]
    Optimality(#[from] OptimalityError),
    #[error("initial multiplier is not in the polar cone (negative λ_G)")]
    NotInPolarCone,
    #[error("every error denominator is below 1e-12; the reference is too close to the iterates")]
    ReferenceTooClose,
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// `Π_{K°}`: clips `λ_G` at zero, leaves the other blocks unchanged.
pub fn project_polar(lam: &UpperMultiplier) -> UpperMultiplier {
    let mut out = lam.clone();
    out.upper_ineq.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Multiplier estimate `λ̃` whose reformulation-Lagrangian gradient equals `∇_u L_ρ`.
fn shifted_multiplier(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    lam: &UpperMultiplier,
    rho: f64,
) -> Result<UpperMultiplier, OptimalityError> {
    let c = fp_constraints(p, u)?;
    let shift = |l: &[f64], c: &[f64]| -> Vec<f64> { l.iter().zip(c).map(|(a, b)| a + rho * b).collect() };
    Ok(UpperMultiplier {
        upper_eq: shift(&lam.upper_eq, &c.upper_eq),
        upper_ineq: lam
            .upper_ineq
            .iter()
            .zip(&c.upper_ineq)
            .map(|(a, b)| (a + rho * b).max(0.0))
            .collect(),
        stationarity: shift(&lam.stationarity, &c.stationarity),
        lower_eq: shift(&lam.lower_eq, &c.lower_eq),
        complementarity: shift(&lam.complementarity, &c.complementarity),
    })
}

/// Value and `u`-gradient of `L_ρ(u; λ)`.
pub fn aug_lagrangian(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    lam: &UpperMultiplier,
    rho: f64,
) -> Result<(f64, Vec<f64>), OptimalityError> {
    assert!(rho > 0.0, "penalty parameter must be positive");
    let c = fp_constraints(p, u)?;
    let mut value = p.upper_objective().value(&u.x, &u.y)?;
    let eq_blocks = [
        (&lam.upper_eq, &c.upper_eq),
        (&lam.stationarity, &c.stationarity),
        (&lam.lower_eq, &c.lower_eq),
        (&lam.complementarity, &c.complementarity),
    ];
    for (l, cv) in eq_blocks {
        value += dot(l, cv) + 0.5 * rho * dot(cv, cv);
    }
    let clipped: f64 = lam
        .upper_ineq
        .iter()
        .zip(&c.upper_ineq)
        .map(|(l, g)| (l + rho * g).max(0.0).powi(2))
        .sum();
    value += (clipped - dot(&lam.upper_ineq, &lam.upper_ineq)) / (2.0 * rho);
    let (_, grad) = fp_lagrangian_grad(p, u, &shifted_multiplier(p, u, lam, rho)?)?;
    Ok((value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    pub max_iter: usize,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub u: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// BFGS on the inverse Hessian with Armijo backtracking (halving).
///
/// The secant update is skipped when `sᵀy <= 1e-12 ‖s‖ ‖y‖`, and the
/// approximation restarts from the identity whenever its direction is not a
/// descent direction or its line search fails. Stops at `‖∇f‖₂ <= eps`.
pub fn minimize_bfgs<F, E>(mut f: F, u0: &[f64], eps: f64, cfg: &InnerConfig) -> Result<InnerResult, E>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), E>,
{
    let n = u0.len();
    let identity = || {
        let mut h = vec![0.0; n * n];
        (0..n).for_each(|i| h[i * n + i] = 1.0);
        h
    };
    let mut u = u0.to_vec();
    let (mut fu, mut g) = f(&u)?;
    let mut hinv = identity();
    let mut fresh = true;
    let mut iterations = 0;
    while norm2(&g) > eps && iterations < cfg.max_iter {
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
        if dot(&dir, &g) >= 0.0 {
            hinv = identity();
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
        }
        let slope = dot(&dir, &g);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..cfg.max_backtracks {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            if let Ok((ft, gt)) = f(&trial) {
                // below rounding the value test is blind; fall back to the gradient norm
                let flat = (ft - fu).abs() <= 1e-14 * (1.0 + fu.abs()) && norm2(&gt) < norm2(&g);
                if ft.is_finite() && (ft <= fu + cfg.armijo * t * slope || flat) {
                    next = Some((trial, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((un, fn_, gn)) = next else {
            if fresh {
                break;
            }
            hinv = identity();
            fresh = true;
            continue;
        };
        let s: Vec<f64> = un.iter().zip(&u).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * norm2(&s) * norm2(&yv) {
            if fresh {
                let scale = sy / dot(&yv, &yv);
                hinv.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut hinv, &s, &yv, sy);
            fresh = false;
        }
        u = un;
        fu = fn_;
        g = gn;
    }
    let grad_norm = norm2(&g);
    Ok(InnerResult {
        u,
        value: fu,
        grad_norm,
        iterations,
        converged: grad_norm <= eps,
    })
}

// H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ with ρ = 1 / sᵀy
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -r * (hy[i] * s[j] + s[i] * hy[j]) + (r * r * yhy + r) * s[i] * s[j];
        }
    }
}

const KINK_SHIFT: f64 = 1e-12;

/// `L_ρ` at a flattened point; at an exact complementarity kink the
/// offending `xi_l` is shifted by `1e-12` and the evaluation retried.
fn aug_lagrangian_flat(
    p: &BilevelProblem,
    v: &[f64],
    lam: &UpperMultiplier,
    rho: f64,
) -> Result<(f64, Vec<f64>, Option<Vec<f64>>), OptimalityError> {
    let d = p.dims();
    let mut u = PrimalDualPoint::unflatten(&d, v)?;
    let mut shifted = false;
    for _ in 0..=d.s {
        match aug_lagrangian(p, &u, lam, rho) {
            Ok((f, g)) => return Ok((f, g, shifted.then(|| u.flatten()))),
            Err(OptimalityError::NondifferentiablePoint { index, .. }) => {
                u.xi[index] += KINK_SHIFT * (1.0 + u.xi[index].abs());
                shifted = true;
            }
            Err(e) => return Err(e),
        }
    }
    let (f, g) = aug_lagrangian(p, &u, lam, rho)?;
    Ok((f, g, Some(u.flatten())))
}

/// Minimizes `L_ρ(·; λ)` from `u0` to `‖∇L_ρ‖₂ <= eps`.
pub fn inner_minimize(
    p: &BilevelProblem,
    u0: &PrimalDualPoint,
    lam: &UpperMultiplier,
    rho: f64,
    eps: f64,
    cfg: &InnerConfig,
) -> Result<(PrimalDualPoint, InnerResult), OptimalityError> {
    let d = p.dims();
    let mut start = u0.flatten();
    if let (_, _, Some(moved)) = aug_lagrangian_flat(p, &start, lam, rho)? {
        start = moved;
    }
    let res = minimize_bfgs(
        |v| aug_lagrangian_flat(p, v, lam, rho).map(|(f, g, _)| (f, g)),
        &start,
        eps,
        cfg,
    )?;
    // the returned point may itself sit on a kink; report the shifted one
    let u = match aug_lagrangian_flat(p, &res.u, lam, rho)? {
        (_, _, Some(moved)) => moved,
        _ => res.u.clone(),
    };
    Ok((PrimalDualPoint::unflatten(&d, &u)?, res))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmConfig {
    pub rho0: f64,
    /// Factor applied to `ρ` after every accepted iteration (1 keeps it fixed).
    pub rho_growth: f64,
    pub rho_max: f64,
    /// Factor applied to `ρ` when the safeguard rejects an inner solution.
    pub safeguard_growth: f64,
    /// `ĉ` in the safeguard `‖(u⁺ - u; λ⁺ - λ)‖ <= ĉ σ`.
    pub c_hat: f64,
    /// `ε_k = psi_coeff · σ_k^1.5`.
    pub psi_coeff: f64,
    /// `ε_k` is kept above `min_inner_tol · ρ`, below which rounding dominates the gradient.
    pub min_inner_tol: f64,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Accepted iterations without a new best `σ` before giving up.
    pub stall_window: usize,
    pub inner: InnerConfig,
}

impl Default for AlmConfig {
    fn default() -> Self {
        Self {
            rho0: 10.0,
            rho_growth: 10.0,
            rho_max: 1e8,
            safeguard_growth: 10.0,
            c_hat: 1e3,
            psi_coeff: 1e-2,
            min_inner_tol: 1e-14,
            outer_tol: 1e-8,
            max_outer: 50,
            stall_window: 10,
            inner: InnerConfig::default(),
        }
    }
}

impl AlmConfig {
    fn validate(&self) -> Result<(), AlmError> {
        let positive = [self.rho0, self.rho_max, self.c_hat, self.psi_coeff, self.outer_tol, self.min_inner_tol];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(AlmError::InvalidConfig("rho0, rho_max, c_hat, psi_coeff and tolerances must be positive"));
        }
        if !(self.rho_growth >= 1.0 && self.safeguard_growth > 1.0) {
            return Err(AlmError::InvalidConfig("rho_growth must be >= 1 and safeguard_growth > 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlmStatus {
    Converged,
    MaxOuter,
    /// `σ` did not improve over `stall_window` accepted iterations.
    Stalled,
    /// The safeguard still failed with `ρ = rho_max`.
    SafeguardFailed,
    /// The inner solver stopped short of `ε_k` with `ρ = rho_max`.
    InnerFailed,
}

/// One inner solve attempted from the state `(u, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmRecord {
    /// Outer iteration index: number of accepted steps before this attempt.
    pub k: usize,
    pub u: PrimalDualPoint,
    pub lambda: UpperMultiplier,
    pub rho: f64,
    pub sigma: f64,
    pub inner_tol: f64,
    pub inner_iterations: usize,
    pub inner_grad_norm: f64,
    /// `‖(u⁺ - u; Π(λ + ρ G̃(u⁺)) - λ)‖`
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlmTrace {
    pub records: Vec<AlmRecord>,
    pub status: AlmStatus,
    pub u: PrimalDualPoint,
    pub lambda: UpperMultiplier,
    pub sigma: f64,
    pub rho: f64,
    /// Accepted outer iterations.
    pub outer_iterations: usize,
}

impl AlmTrace {
    pub fn converged(&self) -> bool {
        self.status == AlmStatus::Converged
    }

    /// The accepted states `(u^0, λ^0), (u^1, λ^1), …` ending with the final one.
    pub fn states(&self) -> Vec<(&PrimalDualPoint, &UpperMultiplier)> {
        let mut out: Vec<_> = self.records.iter().filter(|r| r.accepted).map(|r| (&r.u, &r.lambda)).collect();
        out.push((&self.u, &self.lambda));
        out
    }
}

/// Runs the method from `(u0, λ0)`; `λ0` must already lie in `K°`.
pub fn alm_solve(
    p: &BilevelProblem,
    u0: &PrimalDualPoint,
    lam0: &UpperMultiplier,
    cfg: &AlmConfig,
) -> Result<AlmTrace, AlmError> {
    cfg.validate()?;
    let d = p.dims();
    u0.check(&d).map_err(OptimalityError::from)?;
    lam0.check(&d).map_err(OptimalityError::from)?;
    if !lam0.in_polar_cone() {
        return Err(AlmError::NotInPolarCone);
    }

    // a start exactly on a kink is moved off it like any inner iterate
    let mut u = match aug_lagrangian_flat(p, &u0.flatten(), lam0, cfg.rho0)? {
        (_, _, Some(moved)) => PrimalDualPoint::unflatten(&d, &moved).map_err(OptimalityError::from)?,
        _ => u0.clone(),
    };
    let mut lam = lam0.clone();
    let mut rho = cfg.rho0.min(cfg.rho_max);
    let mut records = Vec::new();
    let mut accepted = 0;
    let mut best_sigma = f64::INFINITY;
    let mut since_best = 0;

    let status = loop {
        let sigma = natural_residual(p, &u, &lam)?;
        if sigma <= cfg.outer_tol {
            break AlmStatus::Converged;
        }
        if sigma < best_sigma {
            best_sigma = sigma;
            since_best = 0;
        } else if since_best >= cfg.stall_window {
            break AlmStatus::Stalled;
        }
        if accepted >= cfg.max_outer {
            break AlmStatus::MaxOuter;
        }
        let eps = (cfg.psi_coeff * sigma.powf(1.5)).max(cfg.min_inner_tol * rho.max(1.0));
        let (u_next, inner) = inner_minimize(p, &u, &lam, rho, eps, &cfg.inner)?;
        let lam_next = project_polar(&shifted_multiplier(p, &u_next, &lam, rho)?);
        let du = crate::numerics::sub_vec(&u_next.flatten(), &u.flatten());
        let dl = crate::numerics::sub_vec(&lam_next.flatten(), &lam.flatten());
        let step_norm = (dot(&du, &du) + dot(&dl, &dl)).sqrt();
        let ok = inner.converged && step_norm <= cfg.c_hat * sigma;
        records.push(AlmRecord {
            k: accepted,
            u: u.clone(),
            lambda: lam.clone(),
            rho,
            sigma,
            inner_tol: eps,
            inner_iterations: inner.iterations,
            inner_grad_norm: inner.grad_norm,
            step_norm,
            accepted: ok,
        });
        if !ok {
            if rho >= cfg.rho_max {
                break if inner.converged { AlmStatus::SafeguardFailed } else { AlmStatus::InnerFailed };
            }
            rho = (rho * cfg.safeguard_growth).min(cfg.rho_max);
            continue;
        }
        u = u_next;
        lam = lam_next;
        accepted += 1;
        since_best += 1;
        rho = (rho * cfg.rho_growth).min(cfg.rho_max);
    };

    let sigma = natural_residual(p, &u, &lam)?;
    Ok(AlmTrace {
        records,
        status,
        u,
        lambda: lam,
        sigma,
        rho,
        outer_iterations: accepted,
    })
}

/// Error quotients `q_k = e_{k+1} / e_k` over consecutive errors with `e_k > 1e-12`.
pub fn quotients_from_errors(errors: &[f64]) -> Result<Vec<f64>, AlmError> {
    let q: Vec<f64> = errors
        .windows(2)
        .filter(|w| w[0] > 1e-12)
        .map(|w| w[1] / w[0])
        .collect();
    if q.is_empty() {
        Err(AlmError::ReferenceTooClose)
    } else {
        Ok(q)
    }
}

/// Q-quotients of the distance of `(u^k, λ^k)` to a reference pair.
pub fn rate_diagnostics(
    trace: &AlmTrace,
    u_ref: &PrimalDualPoint,
    lam_ref: &UpperMultiplier,
) -> Result<Vec<f64>, AlmError> {
    let reference = [u_ref.flatten(), lam_ref.flatten()].concat();
    let errors: Vec<f64> = trace
        .states()
        .into_iter()
        .map(|(u, l)| norm2(&crate::numerics::sub_vec(&[u.flatten(), l.flatten()].concat(), &reference)))
        .collect();
    quotients_from_errors(&errors)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One run of a fixed-penalty sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub rho: f64,
    pub trace: AlmTrace,
    pub quotients: Vec<f64>,
    pub median_quotient: f64,
}

/// Runs the method with `ρ` held at each value of `rhos` (no growth) and
/// measures Q-quotients against the reference pair.
pub fn rate_sweep(
    p: &BilevelProblem,
    u0: &PrimalDualPoint,
    lam0: &UpperMultiplier,
    rhos: &[f64],
    base: &AlmConfig,
    u_ref: &PrimalDualPoint,
    lam_ref: &UpperMultiplier,
) -> Result<Vec<SweepRun>, AlmError> {
    rhos.iter()
        .map(|&rho| {
            let cfg = AlmConfig {
                rho0: rho,
                rho_growth: 1.0,
                ..*base
            };
            let trace = alm_solve(p, u0, lam0, &cfg)?;
            let quotients = rate_diagnostics(&trace, u_ref, lam_ref)?;
            let median_quotient = median(&quotients);
            Ok(SweepRun {
                rho,
                trace,
                quotients,
                median_quotient,
            })
        })
        .collect()
}

/// `‖∇_u L_ρ(u; λ)‖∞`, for checking the inner criterion after the fact.
pub fn aug_gradient_norm(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    lam: &UpperMultiplier,
    rho: f64,
) -> Result<f64, OptimalityError> {
    Ok(norm_inf(&aug_lagrangian(p, u, lam, rho)?.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lower::Tolerances;
    use crate::numerics::{fd_gradient, lu_solve, Matrix};
    use crate::optimality::recover_multipliers;
    use crate::problem::{fixture, fixture_solution, load_problem};

    #[test]
    fn polar_projection() {
        let l = UpperMultiplier {
            upper_eq: vec![-3.0],
            upper_ineq: vec![-1.0, 2.0],
            stationarity: vec![-0.5],
            lower_eq: vec![],
            complementarity: vec![-7.0],
        };
        let pl = project_polar(&l);
        assert_eq!(pl.upper_ineq, vec![0.0, 2.0]);
        assert_eq!((pl.upper_eq.clone(), pl.stationarity.clone(), pl.complementarity.clone()), (vec![-3.0], vec![-0.5], vec![-7.0]));
        assert_eq!(project_polar(&pl), pl);
    }

    #[test]
    fn equality_block_arithmetic() {
        // c(u) = x1 with λ = 1, ρ = 2 at x1 = 1: 1·1 + (2/2)·1² = 2, gradient 1 + 2·1 = 3
        let p = load_problem("dims n=1 m=1\nupper.objective 0\nupper.eq x1\nlower.objective y1^2\n").unwrap();
        let u = PrimalDualPoint::new(&[1.0], &[0.0], &[], &[]);
        let mut l = UpperMultiplier::zeros(&p.dims());
        l.upper_eq[0] = 1.0;
        let (v, g) = aug_lagrangian(&p, &u, &l, 2.0).unwrap();
        assert_eq!((v, g[0]), (2.0, 3.0));
    }

    #[test]
    fn feasible_point_with_zero_multiplier_gives_the_objective() {
        let p = fixture("P1").unwrap();
        let u = fixture_solution("P1").unwrap();
        let l = UpperMultiplier::zeros(&p.dims());
        for rho in [0.1, 1.0, 1e4] {
            let (v, _) = aug_lagrangian(&p, &u, &l, rho).unwrap();
            assert_eq!(v, p.upper_objective().value(&u.x, &u.y).unwrap());
        }
    }

    #[test]
    fn stationary_at_the_projection_solution() {
        let p = fixture("P2").unwrap();
        let u = fixture_solution("P2").unwrap();
        let l = recover_multipliers(&p, &u, &[], &[], &Tolerances::default()).unwrap();
        for rho in [1.0, 10.0, 1e3] {
            assert!(aug_gradient_norm(&p, &u, &l, rho).unwrap() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for name in ["P1", "P2", "P3", "P4"] {
            let p = fixture(name).unwrap();
            let d = p.dims();
            for _ in 0..25 {
                let v: Vec<f64> = (0..d.primal_dual_len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let lv: Vec<f64> = (0..d.multiplier_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let l = project_polar(&UpperMultiplier::unflatten(&d, &lv).unwrap());
                let u = PrimalDualPoint::unflatten(&d, &v).unwrap();
                let Ok((_, g)) = aug_lagrangian(&p, &u, &l, 3.0) else { continue };
                let fd = fd_gradient(
                    |w| aug_lagrangian(&p, &PrimalDualPoint::unflatten(&d, w).unwrap(), &l, 3.0).unwrap().0,
                    &v,
                    1e-6,
                )
                .unwrap();
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() < 1e-5 * (1.0 + a.abs()), "{name}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn bfgs_one_dimensional() {
        let r = minimize_bfgs(
            |u: &[f64]| Ok::<_, ()>(((u[0] - 3.0).powi(2), vec![2.0 * (u[0] - 3.0)])),
            &[0.0],
            1e-8,
            &InnerConfig::default(),
        )
        .unwrap();
        assert!(r.converged && (r.u[0] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_returns_immediately_when_tolerance_is_loose() {
        let r = minimize_bfgs(
            |u: &[f64]| Ok::<_, ()>((u[0] * u[0], vec![2.0 * u[0]])),
            &[1.0],
            10.0,
            &InnerConfig::default(),
        )
        .unwrap();
        assert_eq!((r.iterations, r.u.clone()), (0, vec![1.0]));
    }

    #[test]
    fn inner_solve_on_the_projection_fixture_matches_the_normal_equations() {
        // L_ρ is a strictly convex quadratic here; its minimizer solves ∇L_ρ(u) = 0,
        // which is affine in u, so one linear solve gives the oracle
        let p = fixture("P2").unwrap();
        let d = p.dims();
        let l = UpperMultiplier::unflatten(&d, &[0.2, -0.1, 0.3]).unwrap();
        let rho = 10.0;
        let grad = |v: &[f64]| aug_lagrangian(&p, &PrimalDualPoint::unflatten(&d, v).unwrap(), &l, rho).unwrap().1;
        let g0 = grad(&vec![0.0; 5]);
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|j| {
                let mut e = vec![0.0; 5];
                e[j] = 1.0;
                crate::numerics::sub_vec(&grad(&e), &g0)
            })
            .collect();
        let hess = Matrix::from_cols(&cols, 5);
        let oracle = lu_solve(&hess, &g0.iter().map(|v| -v).collect::<Vec<_>>()).unwrap();
        for start in [[1.0, 1.0, 0.3, 0.3, 0.0], [-2.0, 0.5, 1.0, -1.0, 3.0]] {
            let u0 = PrimalDualPoint::unflatten(&d, &start).unwrap();
            let (u, r) = inner_minimize(&p, &u0, &l, rho, 1e-10, &InnerConfig::default()).unwrap();
            assert!(r.converged && r.grad_norm <= 1e-10);
            let err = norm_inf(&crate::numerics::sub_vec(&u.flatten(), &oracle));
            assert!(err < 1e-8, "{err}");
        }
    }

    #[test]
    fn projection_fixture_converges() {
        let p = fixture("P2").unwrap();
        let u0 = PrimalDualPoint::new(&[1.0, 1.0], &[0.3, 0.3], &[0.0], &[]);
        let trace = alm_solve(&p, &u0, &UpperMultiplier::zeros(&p.dims()), &AlmConfig::default()).unwrap();
        assert!(trace.converged(), "{:?}", trace.status);
        assert!(trace.outer_iterations <= 50);
        let err = norm_inf(&crate::numerics::sub_vec(&trace.u.flatten(), &fixture_solution("P2").unwrap().flatten()));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn active_branch_fixture_converges_from_a_kink() {
        let p = fixture("P4").unwrap();
        let u0 = PrimalDualPoint::new(&[0.0], &[0.5], &[], &[0.5]);
        let trace = alm_solve(&p, &u0, &UpperMultiplier::zeros(&p.dims()), &AlmConfig::default()).unwrap();
        assert!(trace.converged(), "{:?}", trace.status);
        let err = norm_inf(&crate::numerics::sub_vec(&trace.u.flatten(), &fixture_solution("P4").unwrap().flatten()));
        assert!(err < 1e-6, "{:?}", trace.u);
    }

    #[test]
    fn optimal_start_stops_immediately() {
        let p = fixture("P2").unwrap();
        let u = fixture_solution("P2").unwrap();
        let l = recover_multipliers(&p, &u, &[], &[], &Tolerances::default()).unwrap();
        let trace = alm_solve(&p, &u, &l, &AlmConfig::default()).unwrap();
        assert!(trace.converged());
        assert_eq!(trace.outer_iterations, 0);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn negative_upper_multiplier_is_rejected() {
        let p = fixture("P1").unwrap();
        let mut l = UpperMultiplier::zeros(&p.dims());
        l.upper_ineq[0] = -1.0;
        let u = fixture_solution("P1").unwrap();
        assert_eq!(alm_solve(&p, &u, &l, &AlmConfig::default()), Err(AlmError::NotInPolarCone));
    }

    #[test]
    fn synthetic_rates() {
        let geometric: Vec<f64> = (0..20).map(|k| 0.5f64.powi(k)).collect();
        for q in quotients_from_errors(&geometric).unwrap() {
            assert!((q - 0.5).abs() < 1e-15);
        }
        let superlinear: Vec<f64> = (0..6).map(|k: i32| 2f64.powi(-k * k)).collect();
        let q = quotients_from_errors(&superlinear).unwrap();
        assert!(q.windows(2).all(|w| w[1] < w[0]));
        assert!(*q.last().unwrap() < 1e-2);
        assert_eq!(quotients_from_errors(&[0.0, 0.0]), Err(AlmError::ReferenceTooClose));
    }

    #[test]
    fn fixed_penalty_quotients_shrink_as_the_penalty_grows() {
        let p = fixture("P2").unwrap();
        let u0 = PrimalDualPoint::new(&[1.0, 1.0], &[0.3, 0.3], &[0.0], &[]);
        let u_ref = fixture_solution("P2").unwrap();
        let l_ref = recover_multipliers(&p, &u_ref, &[], &[], &Tolerances::default()).unwrap();
        let runs = rate_sweep(&p, &u0, &UpperMultiplier::zeros(&p.dims()), &[10.0, 100.0, 1000.0], &AlmConfig::default(), &u_ref, &l_ref).unwrap();
        for r in &runs {
            assert!(r.trace.converged(), "rho {}: {:?}", r.rho, r.trace.status);
        }
        let med: Vec<f64> = runs.iter().map(|r| r.median_quotient).collect();
        assert!(med[0] > med[1] && med[1] > med[2], "{med:?}");
    }

    #[test]
    fn accepted_steps_meet_the_inner_tolerance_and_keep_inactive_multipliers_at_zero() {
        let cases = [
            ("P1", PrimalDualPoint::new(&[0.0], &[1.0], &[], &[1.0])),
            ("P2", PrimalDualPoint::new(&[1.0, 1.0], &[0.3, 0.3], &[0.0], &[])),
            ("P4", PrimalDualPoint::new(&[0.0], &[0.5], &[], &[0.5])),
        ];
        for (name, u0) in cases {
            let p = fixture(name).unwrap();
            let trace = alm_solve(&p, &u0, &UpperMultiplier::zeros(&p.dims()), &AlmConfig::default()).unwrap();
            assert!(trace.converged(), "{name}: {:?}", trace.status);
            let states = trace.states();
            let accepted: Vec<_> = trace.records.iter().filter(|r| r.accepted).collect();
            for (r, (u_next, l_next)) in accepted.iter().zip(states.iter().skip(1)) {
                let g = norm2(&aug_lagrangian(&p, u_next, &r.lambda, r.rho).unwrap().1);
                assert!(g <= r.inner_tol, "{name} k={}: {g:e} > {:e}", r.k, r.inner_tol);
                assert!(l_next.in_polar_cone());
                let gv = fp_constraints(&p, u_next).unwrap().upper_ineq;
                for i in 0..gv.len() {
                    if (r.lambda.upper_ineq[i] + r.rho * gv[i]).max(0.0) == 0.0 && r.lambda.upper_ineq[i] == 0.0 {
                        assert_eq!(l_next.upper_ineq[i], 0.0);
                    }
                }
            }
        }
    }
}
