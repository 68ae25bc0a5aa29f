//! The lower-level problem `min_y f(x, y)` s.t. `h(x, y) = 0`, `g(x, y) <= 0`
//! at a fixed upper variable `x`.
//!
//! The Lagrangian is `𝓛(x; y, mu, xi) = f + muᵀh + xiᵀg` and the KKT system
//! is written as the nonsmooth equation
//!
//! ```text
//! ∇_y 𝓛 = 0,   h = 0,   g - Π(g + xi) = 0,     Π(v) = min(v, 0) componentwise
//! ```
//!
//! whose last block encodes `g <= 0`, `xi >= 0`, `xiᵀg = 0` in one map.

use thiserror::Error;

use crate::expr::DomainError;
use crate::numerics::{
    min_eig_sym, norm2, norm_inf, nullspace_basis, singular_values, Lu, Matrix, NumericsError,
};
use crate::problem::{check_len, eval_all, jacobian_x, jacobian_y, BilevelProblem, ProblemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LowerError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Dimension(#[from] ProblemError),
    #[error("KKT Jacobian is singular: {0}")]
    SingularJacobian(NumericsError),
    #[error("lower constraint {index} is violated: g = {value:e}")]
    Inconsistent { index: usize, value: f64 },
}

/// Tolerances shared by the regularity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// KKT residual (infinity norm) accepted as zero.
    pub kkt: f64,
    /// `τ_act`: `|g_i| <= τ_act` counts as active, `xi_i > τ_act` as positive.
    pub active: f64,
    /// Rank decision: singular values below `licq_rel * (1 + σ_max)` count as zero.
    pub licq_rel: f64,
    /// `τ_psd`: eigenvalues in `[-τ_psd, τ_psd]` are treated as zero.
    pub psd: f64,
    /// Smallest strict-feasibility margin accepted in the MFCQ linear program.
    pub mfcq: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            kkt: 1e-9,
            active: 1e-7,
            licq_rel: 1e-8,
            psd: 1e-7,
            mfcq: 1e-8,
        }
    }
}

/// `Π` onto the nonpositive orthant.
pub fn project_nonpositive(v: &[f64]) -> Vec<f64> {
    v.iter().map(|a| a.min(0.0)).collect()
}

/// Value and derivative blocks of the lower Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerLagrangian {
    pub value: f64,
    pub grad_y: Vec<f64>,
    pub hess_yy: Matrix,
    /// `∇²_{yx} 𝓛`, `m x n`
    pub hess_yx: Matrix,
}

fn check_point(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    xi: &[f64],
) -> Result<(), ProblemError> {
    let d = p.dims();
    p.check_xy(x, y)?;
    check_len("mu", d.r, mu.len())?;
    check_len("xi", d.s, xi.len())
}

pub fn lower_lagrangian(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    xi: &[f64],
) -> Result<LowerLagrangian, LowerError> {
    check_point(p, x, y, mu, xi)?;
    let f = p.lower_objective();
    let mut value = f.value(x, y)?;
    let mut grad_y = f.grad_y(x, y)?;
    let mut hess_yy = f.hess_yy(x, y)?;
    let mut hess_yx = f.hess_yx(x, y)?;
    let weighted = p.lower_eq().iter().zip(mu).chain(p.lower_ineq().iter().zip(xi));
    for (c, w) in weighted {
        value += w * c.value(x, y)?;
        let gy = c.grad_y(x, y)?;
        for (a, b) in grad_y.iter_mut().zip(&gy) {
            *a += w * b;
        }
        hess_yy = hess_yy.add(&c.hess_yy(x, y)?.scale(*w));
        hess_yx = hess_yx.add(&c.hess_yx(x, y)?.scale(*w));
    }
    Ok(LowerLagrangian {
        value,
        grad_y,
        hess_yy,
        hess_yx,
    })
}

/// The stacked residual `(∇_y 𝓛; h; g - Π(g + xi))` of length `m + r + s`.
pub fn kkt_residual(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    xi: &[f64],
) -> Result<Vec<f64>, LowerError> {
    let lag = lower_lagrangian(p, x, y, mu, xi)?;
    let h = eval_all(p.lower_eq(), x, y)?;
    let g = eval_all(p.lower_ineq(), x, y)?;
    let comp = g.iter().zip(xi).map(|(gi, xii)| gi - (gi + xii).min(0.0));
    Ok(lag.grad_y.into_iter().chain(h).chain(comp).collect())
}

/// Partition of the lower inequality indices (zero-based).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSets {
    /// active with positive multiplier
    pub alpha: Vec<usize>,
    /// active with zero multiplier (biactive)
    pub beta: Vec<usize>,
    /// inactive
    pub gamma: Vec<usize>,
}

impl ActiveSets {
    /// Indices with `|g_i| <= τ_act`, i.e. `α ∪ β` in increasing order.
    pub fn active(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.alpha.iter().chain(&self.beta).copied().collect();
        v.sort_unstable();
        v
    }

    /// Diagonal of `W`: 1 on `γ`, 0 on `α` (and on `β`, which callers reject first).
    pub fn w_diag(&self, s: usize) -> Vec<bool> {
        let mut w = vec![false; s];
        for &i in &self.gamma {
            w[i] = true;
        }
        w
    }
}

fn classify(g: &[f64], xi: &[f64], tau: f64) -> (ActiveSets, Option<(usize, f64)>) {
    let mut sets = ActiveSets::default();
    let mut violated = None;
    for (i, (&gi, &xii)) in g.iter().zip(xi).enumerate() {
        if gi > tau && violated.is_none() {
            violated = Some((i, gi));
        }
        if gi.abs() <= tau && xii > tau {
            sets.alpha.push(i);
        } else if gi.abs() <= tau && xii.abs() <= tau {
            sets.beta.push(i);
        } else {
            sets.gamma.push(i);
        }
    }
    (sets, violated)
}

/// Classifies the lower inequalities at `(x, y, xi)` with tolerance `tau`.
pub fn active_sets(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    xi: &[f64],
    tau: f64,
) -> Result<ActiveSets, LowerError> {
    assert!(tau > 0.0, "activity tolerance must be positive");
    p.check_xy(x, y)?;
    check_len("xi", p.dims().s, xi.len())?;
    let g = eval_all(p.lower_ineq(), x, y)?;
    match classify(&g, xi, tau) {
        (_, Some((index, value))) => Err(LowerError::Inconsistent { index, value }),
        (sets, None) => Ok(sets),
    }
}

/// The KKT Jacobian with respect to `(y, mu, xi)` for a given diagonal of `W`:
///
/// ```text
/// [ ∇²_yy 𝓛      𝒥_y hᵀ  𝒥_y gᵀ ]
/// [ 𝒥_y h         0       0     ]
/// [ (I - W) 𝒥_y g  0      -W    ]
/// ```
pub fn kkt_jacobian(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    xi: &[f64],
    w: &[bool],
) -> Result<Matrix, LowerError> {
    let d = p.dims();
    check_len("W", d.s, w.len())?;
    let lag = lower_lagrangian(p, x, y, mu, xi)?;
    let jh = jacobian_y(p.lower_eq(), x, y)?;
    let jg = jacobian_y(p.lower_ineq(), x, y)?;
    let (m, r) = (d.m, d.r);
    let mut k = Matrix::zeros(d.kkt_len(), d.kkt_len());
    k.set_block(0, 0, &lag.hess_yy);
    k.set_block(0, m, &jh.transpose());
    k.set_block(0, m + r, &jg.transpose());
    k.set_block(m, 0, &jh);
    for (l, &wl) in w.iter().enumerate() {
        let row = m + r + l;
        if wl {
            k[(row, m + r + l)] = -1.0;
        } else {
            k.row_mut(row)[..m].copy_from_slice(jg.row(l));
        }
    }
    Ok(k)
}

/// Right-hand side blocks `[∇²_yx 𝓛; 𝒥_x h; (I - W) 𝒥_x g]` of the
/// sensitivity system, `(m + r + s) x n`.
pub fn kkt_parameter_jacobian(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    xi: &[f64],
    w: &[bool],
) -> Result<Matrix, LowerError> {
    let d = p.dims();
    check_len("W", d.s, w.len())?;
    let lag = lower_lagrangian(p, x, y, mu, xi)?;
    let mut jgx = jacobian_x(p.lower_ineq(), x, y)?;
    for (l, &wl) in w.iter().enumerate() {
        if wl {
            jgx.row_mut(l).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(Matrix::vstack(&[&lag.hess_yx, &jacobian_x(p.lower_eq(), x, y)?, &jgx]))
}

/// Verdicts of the Jacobian uniqueness conditions with their evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianUniquenessReport {
    pub kkt_ok: bool,
    pub licq_ok: bool,
    pub strict_comp_ok: bool,
    /// `None` when strict complementarity fails: the subspace test would
    /// not be the critical cone, so SOSC is not certified either way.
    pub sosc_ok: Option<bool>,
    /// `‖KKT residual‖∞`
    pub kkt_residual_norm: f64,
    /// Smallest singular value of the stacked active gradients; `None` when
    /// nothing is active. Zero when there are more active gradients than `m`.
    pub min_singular_value: Option<f64>,
    /// `min_i (xi_i - g_i)`; `None` when `s = 0`.
    pub strict_comp_margin: Option<f64>,
    /// Smallest eigenvalue of `Zᵀ ∇²_yy 𝓛 Z`; `None` when `Z` is empty or SOSC is not certified.
    pub reduced_hessian_min_eig: Option<f64>,
    /// Dimension of the null space `Z` of the active gradients.
    pub null_space_dim: usize,
    pub active: ActiveSets,
}

impl JacobianUniquenessReport {
    /// Conjunction of the four verdicts.
    pub fn holds(&self) -> bool {
        self.kkt_ok && self.licq_ok && self.strict_comp_ok && self.sosc_ok == Some(true)
    }
}

/// Checks KKT, LICQ, strict complementarity and second-order sufficiency of
/// the lower problem at `(y, mu, xi)`.
pub fn check_jacobian_uniqueness(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    xi: &[f64],
    tols: &Tolerances,
) -> Result<JacobianUniquenessReport, LowerError> {
    let d = p.dims();
    let residual = kkt_residual(p, x, y, mu, xi)?;
    let kkt_residual_norm = norm_inf(&residual);
    let g = eval_all(p.lower_ineq(), x, y)?;
    let (active, violated) = classify(&g, xi, tols.active);
    let kkt_ok = kkt_residual_norm <= tols.kkt && violated.is_none();

    let jh = jacobian_y(p.lower_eq(), x, y)?;
    let jg = jacobian_y(p.lower_ineq(), x, y)?;
    let mut rows: Vec<Vec<f64>> = jh.to_rows();
    rows.extend(active.active().iter().map(|&i| jg.row(i).to_vec()));
    let grads = Matrix::from_row_vecs(&rows, d.m);

    let (licq_ok, min_singular_value) = if rows.is_empty() {
        (true, None)
    } else {
        let sv = singular_values(&grads);
        let max = sv.first().copied().unwrap_or(0.0);
        let min = if rows.len() > d.m { 0.0 } else { sv.last().copied().unwrap_or(0.0) };
        (min > tols.licq_rel * (1.0 + max), Some(min))
    };

    let strict_comp_margin = g
        .iter()
        .zip(xi)
        .map(|(gi, xii)| xii - gi)
        .reduce(f64::min);
    let strict_comp_ok = active.beta.is_empty() && strict_comp_margin.map_or(true, |v| v > 0.0);

    let z = nullspace_basis(&grads, tols.licq_rel * (1.0 + grads.max_abs()));
    let null_space_dim = z.cols();
    let (sosc_ok, reduced_hessian_min_eig) = if !strict_comp_ok {
        (None, None)
    } else if null_space_dim == 0 {
        (Some(true), None)
    } else {
        let hyy = lower_lagrangian(p, x, y, mu, xi)?.hess_yy;
        let reduced = z.transpose().matmul(&hyy).matmul(&z);
        let lam = min_eig_sym(&reduced).map_err(LowerError::SingularJacobian)?;
        (Some(lam > tols.psd), Some(lam))
    };

    Ok(JacobianUniquenessReport {
        kkt_ok,
        licq_ok,
        strict_comp_ok,
        sosc_ok,
        kkt_residual_norm,
        min_singular_value,
        strict_comp_margin,
        reduced_hessian_min_eig,
        null_space_dim,
        active,
    })
}

/// Result of a lower-level solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerSolution {
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub xi: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖KKT residual‖∞` at the returned point.
    pub residual: f64,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;

/// Damped semismooth Newton on the KKT residual, from `(y0, mu0, xi0)`.
///
/// The generalized Jacobian picks `w_i = 1` when `g_i + xi_i < 0` and
/// `w_i = 0` otherwise. Convergence is local; a start near the wanted KKT
/// point (for example the solution at a nearby `x`) is the caller's job.
pub fn solve_lower(
    p: &BilevelProblem,
    x: &[f64],
    y0: &[f64],
    mu0: &[f64],
    xi0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<LowerSolution, LowerError> {
    assert!(tol > 0.0, "tolerance must be positive");
    check_point(p, x, y0, mu0, xi0)?;
    let d = p.dims();
    let (m, r) = (d.m, d.r);
    let split = |z: &[f64]| (z[..m].to_vec(), z[m..m + r].to_vec(), z[m + r..].to_vec());
    let residual_at = |z: &[f64]| {
        let (y, mu, xi) = split(z);
        kkt_residual(p, x, &y, &mu, &xi)
    };

    let mut z: Vec<f64> = [y0, mu0, xi0].concat();
    let mut res = residual_at(&z)?;
    let mut iterations = 0;
    while norm_inf(&res) > tol && iterations < max_iter {
        iterations += 1;
        let (y, mu, xi) = split(&z);
        let g = eval_all(p.lower_ineq(), x, &y)?;
        let w: Vec<bool> = g.iter().zip(&xi).map(|(gi, xii)| gi + xii < 0.0).collect();
        let k = kkt_jacobian(p, x, &y, &mu, &xi, &w)?;
        let lu = Lu::factor(&k).map_err(LowerError::SingularJacobian)?;
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let step = lu.solve(&rhs).map_err(LowerError::SingularJacobian)?;

        let merit = norm2(&res);
        let mut t = 1.0;
        let mut accepted = None;
        while t >= MIN_STEP {
            let trial: Vec<f64> = z.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let Ok(trial_res) = residual_at(&trial) {
                if norm2(&trial_res) <= (1.0 - ARMIJO * t) * merit {
                    accepted = Some((trial, trial_res));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, trial_res)) => {
                z = trial;
                res = trial_res;
            }
            None => break,
        }
    }
    let (y, mu, xi) = split(&z);
    let residual = norm_inf(&res);
    Ok(LowerSolution {
        y,
        mu,
        xi,
        converged: residual <= tol,
        iterations,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::fixture;
    use proptest::prelude::*;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn lagrangian_gradients_at_hand_kkt_points() {
        let p1 = fixture("P1").unwrap();
        let lag = lower_lagrangian(&p1, &[0.0], &[1.0], &[], &[1.0]).unwrap();
        assert_eq!(lag.grad_y, vec![0.0]);
        for (x, y, xi) in [(0.0, 1.0, 1.0), (3.0, -2.0, 0.5)] {
            let lag = lower_lagrangian(&p1, &[x], &[y], &[], &[xi]).unwrap();
            assert_eq!(lag.hess_yy, Matrix::identity(1));
        }
        let p2 = fixture("P2").unwrap();
        let lag = lower_lagrangian(&p2, &[0.0, 0.0], &[0.5, 0.5], &[-0.5], &[]).unwrap();
        assert_eq!(lag.grad_y, vec![0.0, 0.0]);
    }

    #[test]
    fn residual_examples() {
        let p1 = fixture("P1").unwrap();
        assert_eq!(kkt_residual(&p1, &[0.0], &[1.0], &[], &[1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(kkt_residual(&p1, &[0.0], &[1.0], &[], &[0.0]).unwrap(), vec![1.0, 0.0]);
        let p3 = fixture("P3").unwrap();
        for xi in [0.0, 0.7, 3.0] {
            assert_eq!(kkt_residual(&p3, &[0.0], &[-1.0], &[], &[xi]).unwrap()[0], -2.0);
        }
    }

    #[test]
    fn active_set_examples() {
        let p1 = fixture("P1").unwrap();
        let a = active_sets(&p1, &[0.0], &[1.0], &[1.0], 1e-7).unwrap();
        assert_eq!((a.alpha, a.beta.len(), a.gamma.len()), (vec![0], 0, 0));
        let a = active_sets(&p1, &[2.0], &[2.0], &[0.0], 1e-7).unwrap();
        assert_eq!(a.gamma, vec![0]);
        let a = active_sets(&p1, &[0.0], &[1.0], &[0.0], 1e-7).unwrap();
        assert_eq!(a.beta, vec![0]);
        assert!(matches!(
            active_sets(&p1, &[0.0], &[0.5], &[0.0], 1e-7),
            Err(LowerError::Inconsistent { index: 0, .. })
        ));
    }

    #[test]
    fn jacobian_uniqueness_examples() {
        let p1 = fixture("P1").unwrap();
        let rep = check_jacobian_uniqueness(&p1, &[0.0], &[1.0], &[], &[1.0], &tols()).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.null_space_dim, 0);
        assert_eq!(rep.reduced_hessian_min_eig, None);

        let p3 = fixture("P3").unwrap();
        let rep = check_jacobian_uniqueness(&p3, &[0.0], &[-1.0], &[], &[0.0], &tols()).unwrap();
        assert!(!rep.kkt_ok);
        assert!(!rep.licq_ok);
        assert_eq!(rep.min_singular_value, Some(0.0));

        let p2 = fixture("P2").unwrap();
        let rep =
            check_jacobian_uniqueness(&p2, &[0.0, 0.0], &[0.5, 0.5], &[-0.5], &[], &tols()).unwrap();
        assert!(rep.holds());
        assert_eq!(rep.null_space_dim, 1);
        assert!((rep.reduced_hessian_min_eig.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn biactive_point_is_not_certified() {
        let p1 = fixture("P1").unwrap();
        let rep = check_jacobian_uniqueness(&p1, &[1.0], &[1.0], &[], &[0.0], &tols()).unwrap();
        assert!(rep.kkt_ok);
        assert!(!rep.strict_comp_ok);
        assert_eq!(rep.sosc_ok, None);
        assert!(!rep.holds());
    }

    #[test]
    fn solver_examples() {
        let p1 = fixture("P1").unwrap();
        let s = solve_lower(&p1, &[0.0], &[0.5], &[], &[0.5], 1e-12, 50).unwrap();
        assert!(s.converged);
        assert!((s.y[0] - 1.0).abs() < 1e-10 && (s.xi[0] - 1.0).abs() < 1e-10);

        let s = solve_lower(&p1, &[2.0], &[0.0], &[], &[1.0], 1e-12, 50).unwrap();
        assert!(s.converged);
        assert!((s.y[0] - 2.0).abs() < 1e-10 && s.xi[0].abs() < 1e-10);

        let p2 = fixture("P2").unwrap();
        let s = solve_lower(&p2, &[1.0, 1.0], &[0.0, 0.0], &[0.0], &[], 1e-12, 50).unwrap();
        assert!(s.converged);
        for v in &s.y {
            assert!((v - 0.5).abs() < 1e-10);
        }
        assert!((s.mu[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn clip_map_closed_form() {
        let p1 = fixture("P1").unwrap();
        for x in [-1.0, -0.5, 0.0, 0.5, 1.5, 2.0, 3.0] {
            let s = solve_lower(&p1, &[x], &[0.0], &[], &[0.0], 1e-12, 100).unwrap();
            assert!(s.converged, "x = {x}");
            let (y, xi) = if x < 1.0 { (1.0, 1.0 - x) } else { (x, 0.0) };
            assert!((s.y[0] - y).abs() < 1e-8 && (s.xi[0] - xi).abs() < 1e-8, "x = {x}: {s:?}");
        }
    }

    #[test]
    fn wrong_dimensions() {
        let p2 = fixture("P2").unwrap();
        assert!(matches!(
            kkt_residual(&p2, &[0.0], &[0.5, 0.5], &[0.0], &[]),
            Err(LowerError::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_nonexpansive(
            a in proptest::collection::vec(-10.0f64..10.0, 6),
            b in proptest::collection::vec(-10.0f64..10.0, 6),
        ) {
            let pa = project_nonpositive(&a);
            prop_assert_eq!(project_nonpositive(&pa), pa.clone());
            let pb = project_nonpositive(&b);
            let lhs = norm2(&crate::numerics::sub_vec(&pa, &pb));
            let rhs = norm2(&crate::numerics::sub_vec(&a, &b));
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn converged_points_are_kkt(x in -3.0f64..3.0, y0 in -2.0f64..2.0, xi0 in 0.0f64..2.0) {
            let p1 = fixture("P1").unwrap();
            let s = solve_lower(&p1, &[x], &[y0], &[], &[xi0], 1e-10, 100).unwrap();
            if s.converged {
                let res = kkt_residual(&p1, &[x], &s.y, &[], &s.xi).unwrap();
                prop_assert!(norm_inf(&res) <= 1e-10);
            }
        }

        #[test]
        fn loosening_the_activity_tolerance_is_monotone(
            y in 0.9999f64..1.0001, xi in -1e-4f64..1e-4, t1 in 1e-9f64..1e-6, scale in 1.0f64..100.0
        ) {
            // a larger τ_act never creates an inconsistency and only enlarges
            // the active set α ∪ β
            let p1 = fixture("P1").unwrap();
            let t2 = t1 * scale;
            let tight = active_sets(&p1, &[0.0], &[y], &[xi], t1);
            let loose = active_sets(&p1, &[0.0], &[y], &[xi], t2);
            if tight.is_ok() {
                prop_assert!(loose.is_ok());
            }
            if let (Ok(a), Ok(b)) = (tight, loose) {
                for i in a.active() {
                    prop_assert!(b.active().contains(&i));
                }
            }
        }
    }
}
