//! The single-level KKT reformulation in `u = (x, y, mu, xi)`:
//!
//! ```text
//! min_u F(x, y)  s.t.  H = 0,  G <= 0,  ∇_y 𝓛 = 0,  h = 0,  g - Π(g + xi) = 0
//! ```
//!
//! Its constraint map `G̃(u) = (H, G, ∇_y 𝓛, h, g - Π(g + xi))` must lie in
//! `K = {0} × ℝ₋^q × {0} × {0} × {0}`, and its Lagrangian is
//!
//! ```text
//! L(u; λ) = F + λ_Hᵀ H + λ_Gᵀ G + λ_𝓛ᵀ ∇_y 𝓛 + λ_hᵀ h + λ_gᵀ (g - Π(g + xi)).
//! ```
//!
//! The `Π` term is differentiable away from `g_l + xi_l = 0`; there its
//! Jacobian in `xi` is `W = diag(w)` with `w_l = 1` when `g_l + xi_l < 0`.
//! Second derivatives of `L` only need second and third derivatives of the
//! problem functions, never second derivatives of the solution map.

mod conditions;
mod transport;

pub use conditions::{
    check_first_order_fp, check_mfcq_fp, check_second_order_fp, critical_cone_fp, matrix_a,
    natural_residual, reduced_quadratic_form, ConeRep, FirstOrderReport, MfcqReport, Mode,
    SecondOrderReport,
};
pub use transport::{sp_hessian_fd, u_transform};

use thiserror::Error;

use crate::expr::DomainError;
use crate::lower::{active_sets, kkt_jacobian, lower_lagrangian, LowerError, Tolerances};
use crate::numerics::{Lu, Matrix, NumericsError};
use crate::problem::{
    eval_all, jacobian, jacobian_y, BilevelProblem, PrimalDualPoint, ProblemError, UpperMultiplier,
};
use crate::sensitivity::SensitivityError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimalityError {
    #[error("complementarity map is not differentiable at lower constraint {index} (g + xi = {value:e})")]
    NondifferentiablePoint { index: usize, value: f64 },
    #[error("strict complementarity fails at lower constraints {0:?}")]
    StrictComplementarityViolated(Vec<usize>),
    #[error("K(x) is singular: {0}")]
    SingularK(NumericsError),
    #[error("critical cone is {{0}}; second-order conditions hold vacuously")]
    EmptyCone,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error(transparent)]
    Sensitivity(#[from] SensitivityError),
}

impl From<DomainError> for OptimalityError {
    fn from(e: DomainError) -> Self {
        Self::Lower(LowerError::Domain(e))
    }
}

impl From<ProblemError> for OptimalityError {
    fn from(e: ProblemError) -> Self {
        Self::Lower(LowerError::Dimension(e))
    }
}

/// `G̃(u)` split by block.
#[derive(Debug, Clone, PartialEq)]
pub struct FpConstraintValue {
    /// `H`
    pub upper_eq: Vec<f64>,
    /// `G`
    pub upper_ineq: Vec<f64>,
    /// `∇_y 𝓛`
    pub stationarity: Vec<f64>,
    /// `h`
    pub lower_eq: Vec<f64>,
    /// `g - Π(g + xi)`
    pub complementarity: Vec<f64>,
}

impl FpConstraintValue {
    /// Flattened in multiplier order `(H, G, ∇_y 𝓛, h, comp)`.
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

    /// Distance of `G̃(u)` from `K`.
    pub fn infeasibility(&self) -> f64 {
        let eq = self
            .upper_eq
            .iter()
            .chain(&self.stationarity)
            .chain(&self.lower_eq)
            .chain(&self.complementarity)
            .map(|v| v * v);
        let ineq = self.upper_ineq.iter().map(|v| v.max(0.0).powi(2));
        eq.chain(ineq).sum::<f64>().sqrt()
    }
}

pub fn fp_constraints(p: &BilevelProblem, u: &PrimalDualPoint) -> Result<FpConstraintValue, OptimalityError> {
    u.check(&p.dims())?;
    let (x, y) = (&u.x[..], &u.y[..]);
    let lag = lower_lagrangian(p, x, y, &u.mu, &u.xi)?;
    let g = eval_all(p.lower_ineq(), x, y)?;
    Ok(FpConstraintValue {
        upper_eq: eval_all(p.upper_eq(), x, y)?,
        upper_ineq: eval_all(p.upper_ineq(), x, y)?,
        stationarity: lag.grad_y,
        lower_eq: eval_all(p.lower_eq(), x, y)?,
        complementarity: g.iter().zip(&u.xi).map(|(gi, xii)| gi - (gi + xii).min(0.0)).collect(),
    })
}

/// Diagonal of `W` from the sign of `g + xi`; fails at the kink.
pub fn complementarity_w(p: &BilevelProblem, u: &PrimalDualPoint) -> Result<Vec<bool>, OptimalityError> {
    let g = eval_all(p.lower_ineq(), &u.x, &u.y)?;
    g.iter()
        .zip(&u.xi)
        .enumerate()
        .map(|(index, (gi, xii))| {
            let value = gi + xii;
            if value.abs() <= 4.0 * f64::EPSILON * (1.0 + gi.abs() + xii.abs()) {
                Err(OptimalityError::NondifferentiablePoint { index, value })
            } else {
                Ok(value < 0.0)
            }
        })
        .collect()
}

/// Joint `(x, y)` Hessian of the lower Lagrangian, `(n+m) x (n+m)`.
fn lower_joint_hessian(p: &BilevelProblem, u: &PrimalDualPoint) -> Result<Matrix, OptimalityError> {
    let (x, y) = (&u.x[..], &u.y[..]);
    let mut hess = p.lower_objective().hess(x, y)?;
    let weighted = p.lower_eq().iter().zip(&u.mu).chain(p.lower_ineq().iter().zip(&u.xi));
    for (c, w) in weighted {
        hess = hess.add(&c.hess(x, y)?.scale(*w));
    }
    Ok(hess)
}

fn check_multiplier(p: &BilevelProblem, u: &PrimalDualPoint, lam: &UpperMultiplier) -> Result<(), OptimalityError> {
    let d = p.dims();
    u.check(&d)?;
    lam.check(&d)?;
    Ok(())
}

/// Value and `u`-gradient of the reformulation's Lagrangian.
pub fn fp_lagrangian_grad(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    lam: &UpperMultiplier,
) -> Result<(f64, Vec<f64>), OptimalityError> {
    check_multiplier(p, u, lam)?;
    let w = complementarity_w(p, u)?;
    let d = p.dims();
    let (x, y) = (&u.x[..], &u.y[..]);
    let nz = d.n + d.m;
    let c = fp_constraints(p, u)?;

    let value = p.upper_objective().value(x, y)?
        + crate::numerics::dot(&lam.flatten(), &c.flatten());

    let mut gz = p.upper_objective().grad(x, y)?;
    let mut add_rows = |jac: &Matrix, weights: &[f64]| {
        for (v, a) in gz.iter_mut().zip(jac.tr_matvec(weights)) {
            *v += a;
        }
    };
    add_rows(&jacobian(p.upper_eq(), x, y)?, &lam.upper_eq);
    add_rows(&jacobian(p.upper_ineq(), x, y)?, &lam.upper_ineq);
    add_rows(&jacobian(p.lower_eq(), x, y)?, &lam.lower_eq);
    let comp_weights: Vec<f64> = lam
        .complementarity
        .iter()
        .zip(&w)
        .map(|(l, &wl)| if wl { 0.0 } else { *l })
        .collect();
    add_rows(&jacobian(p.lower_ineq(), x, y)?, &comp_weights);
    // ∇_z (λ_𝓛ᵀ ∇_y 𝓛) = ∇²_{zy} 𝓛 · λ_𝓛
    let hzy = lower_joint_hessian(p, u)?.block(0, d.n, nz, d.m);
    for (v, a) in gz.iter_mut().zip(hzy.matvec(&lam.stationarity)) {
        *v += a;
    }

    let gmu = jacobian_y(p.lower_eq(), x, y)?.matvec(&lam.stationarity);
    let gxi: Vec<f64> = jacobian_y(p.lower_ineq(), x, y)?
        .matvec(&lam.stationarity)
        .into_iter()
        .zip(lam.complementarity.iter().zip(&w))
        .map(|(a, (l, &wl))| if wl { a - l } else { a })
        .collect();

    Ok((value, [gz, gmu, gxi].concat()))
}

/// Hessian of the reformulation's Lagrangian in `u`.
///
/// The `(x, y)` block contains `∇²_{(x,y)} (λ_𝓛ᵀ ∇_y 𝓛)`, assembled from the
/// Hessians of the partials `∂f/∂y_j`, `∂h_k/∂y_j`, `∂g_l/∂y_j` weighted by
/// `λ_𝓛,j`, `mu_k`, `xi_l`. The `(mu, xi)` block is identically zero.
pub fn fp_hessian(p: &BilevelProblem, u: &PrimalDualPoint, lam: &UpperMultiplier) -> Result<Matrix, OptimalityError> {
    check_multiplier(p, u, lam)?;
    let w = complementarity_w(p, u)?;
    let d = p.dims();
    let (x, y) = (&u.x[..], &u.y[..]);
    let nz = d.n + d.m;

    let mut zz = p.upper_objective().hess(x, y)?;
    let mut add = |m: Matrix, c: f64| -> Result<(), OptimalityError> {
        if c != 0.0 {
            zz = zz.add(&m.scale(c));
        }
        Ok(())
    };
    for (f, l) in p.upper_eq().iter().zip(&lam.upper_eq) {
        add(f.hess(x, y)?, *l)?;
    }
    for (f, l) in p.upper_ineq().iter().zip(&lam.upper_ineq) {
        add(f.hess(x, y)?, *l)?;
    }
    for (f, l) in p.lower_eq().iter().zip(&lam.lower_eq) {
        add(f.hess(x, y)?, *l)?;
    }
    for ((f, l), &wl) in p.lower_ineq().iter().zip(&lam.complementarity).zip(&w) {
        if !wl {
            add(f.hess(x, y)?, *l)?;
        }
    }
    for (j, &lj) in lam.stationarity.iter().enumerate() {
        if lj == 0.0 {
            continue;
        }
        add(p.lower_objective().grad_y_hess(j, x, y)?, lj)?;
        for (h, mu) in p.lower_eq().iter().zip(&u.mu) {
            add(h.grad_y_hess(j, x, y)?, lj * mu)?;
        }
        for (g, xi) in p.lower_ineq().iter().zip(&u.xi) {
            add(g.grad_y_hess(j, x, y)?, lj * xi)?;
        }
    }

    let total = d.primal_dual_len();
    let mut hess = Matrix::zeros(total, total);
    hess.set_block(0, 0, &zz);
    // coupling of (x, y) with mu_k and xi_l: ∇²_{zy} c · λ_𝓛
    let couplings = p.lower_eq().iter().chain(p.lower_ineq());
    for (col, c) in couplings.enumerate() {
        let v = c.hess(x, y)?.block(0, d.n, nz, d.m).matvec(&lam.stationarity);
        for (i, vi) in v.into_iter().enumerate() {
            hess[(i, nz + col)] = vi;
            hess[(nz + col, i)] = vi;
        }
    }
    Ok(hess)
}

/// Multipliers `(λ_𝓛, λ_h, λ_g)` making `∇_{(y,mu,xi)} L` vanish for given
/// upper multipliers, from `Kᵀ (λ_𝓛; λ_h; λ_g) = -(∇_y L; 0; 0)` where
/// `L = F + λ_Hᵀ H + λ_Gᵀ G`.
pub fn recover_multipliers(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    upper_eq: &[f64],
    upper_ineq: &[f64],
    tols: &Tolerances,
) -> Result<UpperMultiplier, OptimalityError> {
    let d = p.dims();
    u.check(&d)?;
    crate::problem::check_len("lambda_H", d.p, upper_eq.len())?;
    crate::problem::check_len("lambda_G", d.q, upper_ineq.len())?;
    let (x, y) = (&u.x[..], &u.y[..]);
    let active = active_sets(p, x, y, &u.xi, tols.active)?;
    if !active.beta.is_empty() {
        return Err(OptimalityError::StrictComplementarityViolated(active.beta));
    }
    let k = kkt_jacobian(p, x, y, &u.mu, &u.xi, &active.w_diag(d.s))?;
    let mut grad_y = p.upper_objective().grad_y(x, y)?;
    for (fs, ls) in [(p.upper_eq(), upper_eq), (p.upper_ineq(), upper_ineq)] {
        let add = jacobian_y(fs, x, y)?.tr_matvec(ls);
        grad_y.iter_mut().zip(add).for_each(|(a, b)| *a += b);
    }
    let mut rhs = vec![0.0; d.kkt_len()];
    for (r, g) in rhs.iter_mut().zip(&grad_y) {
        *r = -g;
    }
    let lu = Lu::factor(&k).map_err(OptimalityError::SingularK)?;
    let v = lu.solve_transpose(&rhs).map_err(OptimalityError::SingularK)?;
    Ok(UpperMultiplier {
        upper_eq: upper_eq.to_vec(),
        upper_ineq: upper_ineq.to_vec(),
        stationarity: v[..d.m].to_vec(),
        lower_eq: v[d.m..d.m + d.r].to_vec(),
        complementarity: v[d.m + d.r..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fd_gradient, fd_jacobian, norm_inf};
    use crate::problem::{fixture, fixture_solution};

    fn lam(d: &crate::problem::Dims, v: &[f64]) -> UpperMultiplier {
        UpperMultiplier::unflatten(d, v).unwrap()
    }

    #[test]
    fn constraint_examples() {
        let p2 = fixture("P2").unwrap();
        let c = fp_constraints(&p2, &fixture_solution("P2").unwrap()).unwrap();
        assert!(c.flatten().iter().all(|v| *v == 0.0));

        let p1 = fixture("P1").unwrap();
        let c = fp_constraints(&p1, &PrimalDualPoint::new(&[0.0], &[1.0], &[], &[1.0])).unwrap();
        assert_eq!(c.flatten(), vec![-3.0, 0.0, 0.0]);

        let p4 = fixture("P4").unwrap();
        let c = fp_constraints(&p4, &fixture_solution("P4").unwrap()).unwrap();
        assert_eq!(c.flatten(), vec![-1.0, 0.0, 0.0]);
        assert_eq!(c.infeasibility(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let p2 = fixture("P2").unwrap();
        let d = p2.dims();
        let u = fixture_solution("P2").unwrap();
        let (_, g) = fp_lagrangian_grad(&p2, &u, &lam(&d, &[0.0, 0.0, -0.5])).unwrap();
        assert!(norm_inf(&g) < 1e-15, "{g:?}");

        // λ = 0 leaves only F
        let u = PrimalDualPoint::new(&[0.3, -0.2], &[0.1, 0.7], &[0.4], &[]);
        let (v, g) = fp_lagrangian_grad(&p2, &u, &UpperMultiplier::zeros(&d)).unwrap();
        let f = p2.upper_objective();
        assert_eq!(v, f.value(&u.x, &u.y).unwrap());
        assert_eq!(g[..4].to_vec(), f.grad(&u.x, &u.y).unwrap());
        assert_eq!(g[4], 0.0);

        let p4 = fixture("P4").unwrap();
        let u = fixture_solution("P4").unwrap();
        let (_, g) = fp_lagrangian_grad(&p4, &u, &UpperMultiplier::zeros(&p4.dims())).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn recovery_examples() {
        let t = Tolerances::default();
        let p2 = fixture("P2").unwrap();
        let l = recover_multipliers(&p2, &fixture_solution("P2").unwrap(), &[], &[], &t).unwrap();
        assert!(norm_inf(&l.stationarity) < 1e-15);
        assert!((l.lower_eq[0] + 0.5).abs() < 1e-15);

        let p4 = fixture("P4").unwrap();
        let l = recover_multipliers(&p4, &fixture_solution("P4").unwrap(), &[0.0], &[0.0], &t);
        assert!(l.is_err(), "wrong λ_G length is rejected");
        let l = recover_multipliers(&p4, &fixture_solution("P4").unwrap(), &[], &[0.0], &t).unwrap();
        assert_eq!(l.flatten(), vec![0.0; 3]);

        let p1 = fixture("P1").unwrap();
        let u = PrimalDualPoint::new(&[0.0], &[1.0], &[], &[1.0]);
        let l = recover_multipliers(&p1, &u, &[], &[0.0], &t).unwrap();
        assert_eq!((l.stationarity[0], l.complementarity[0]), (0.0, 1.0));

        // inactive branch at the bilevel solution
        let l = recover_multipliers(&p1, &fixture_solution("P1").unwrap(), &[], &[0.0], &t).unwrap();
        assert_eq!((l.stationarity[0], l.complementarity[0]), (-1.0, 1.0));
    }

    #[test]
    fn hessian_examples() {
        let p2 = fixture("P2").unwrap();
        let d = p2.dims();
        let h = fp_hessian(&p2, &fixture_solution("P2").unwrap(), &lam(&d, &[0.0, 0.0, -0.5])).unwrap();
        let mut expected = Matrix::identity(5);
        expected[(4, 4)] = 0.0;
        assert_eq!(h, expected);

        let p1 = fixture("P1").unwrap();
        let u = PrimalDualPoint::new(&[0.0], &[1.0], &[], &[1.0]);
        let h = fp_hessian(&p1, &u, &lam(&p1.dims(), &[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(h.block(0, 0, 2, 2), Matrix::diag(&[2.0, 0.0]));
    }

    #[test]
    fn kink_is_reported() {
        let p1 = fixture("P1").unwrap();
        let u = PrimalDualPoint::new(&[1.0], &[1.0], &[], &[0.0]);
        assert!(matches!(
            fp_lagrangian_grad(&p1, &u, &UpperMultiplier::zeros(&p1.dims())),
            Err(OptimalityError::NondifferentiablePoint { index: 0, .. })
        ));
    }

    const NONLINEAR: &str = "\
dims n=2 m=2
upper.objective x1*y2 + sin(x2)*y1^2 + exp(0.3*x1*y1)
upper.eq x1^2 + y1*y2 - 0.5
upper.ineq x2*y1 - cos(y2)
lower.objective (y1 - x1)^2*(1 + y2^2) + y2^4 + x2*y1*y2
lower.eq y1 + x1*y2^2 - x2
lower.ineq y1^2*x2 - y2 - 1
lower.ineq x1*y1*y2 - 2
";

    fn random_point(seed: u64) -> (PrimalDualPoint, UpperMultiplier) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut v = |k: usize| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let u = PrimalDualPoint {
            x: v(2),
            y: v(2),
            mu: v(1),
            xi: v(2),
        };
        let l = UpperMultiplier {
            upper_eq: v(1),
            upper_ineq: v(1),
            stationarity: v(2),
            lower_eq: v(1),
            complementarity: v(2),
        };
        (u, l)
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let p = crate::problem::load_problem(NONLINEAR).unwrap();
        let d = p.dims();
        for seed in 0..20 {
            let (u, l) = random_point(seed);
            let flat = u.flatten();
            let at = |v: &[f64]| PrimalDualPoint::unflatten(&d, v).unwrap();
            let (_, g) = fp_lagrangian_grad(&p, &u, &l).unwrap();
            let fd = fd_gradient(|v| fp_lagrangian_grad(&p, &at(v), &l).unwrap().0, &flat, 1e-6).unwrap();
            let scale = 1.0 + norm_inf(&g);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6 * scale, "seed {seed}: {a} vs {b}");
            }
            let h = fp_hessian(&p, &u, &l).unwrap();
            assert_eq!(h.asymmetry(), 0.0);
            let fdh = fd_jacobian(|v| fp_lagrangian_grad(&p, &at(v), &l).unwrap().1, &flat, 1e-4).unwrap();
            assert!(h.sub(&fdh).max_abs() < 1e-3 * (1.0 + h.max_abs()), "seed {seed}");
            let nz = d.n + d.m;
            let tail = h.block(nz, nz, d.r + d.s, d.r + d.s);
            assert_eq!(tail.max_abs(), 0.0);
        }
    }
}
