use super::{check_multiplier, fp_constraints, fp_hessian, fp_lagrangian_grad, OptimalityError};
use crate::lower::{active_sets, kkt_jacobian, lower_lagrangian, Tolerances};
use crate::numerics::{
    lp_maximize, min_eig_sym, norm2, nullspace_basis, singular_values, LpProblem, Matrix,
};
use crate::problem::{jacobian, jacobian_x, BilevelProblem, PrimalDualPoint, UpperMultiplier};

/// Jacobian in `u` of the equality-type constraints `(H, ∇_y 𝓛, h, g - Π(g + xi))`:
///
/// ```text
/// [ 𝒥_x H          𝒥_y H          0        0      ]
/// [ ∇²_yx 𝓛        ∇²_yy 𝓛        𝒥_y hᵀ   𝒥_y gᵀ ]
/// [ 𝒥_x h          𝒥_y h          0        0      ]
/// [ (I - W) 𝒥_x g  (I - W) 𝒥_y g  0        -W     ]
/// ```
///
/// The last three block rows restricted to `(y, mu, xi)` are `K(x)`.
pub fn matrix_a(p: &BilevelProblem, u: &PrimalDualPoint, tols: &Tolerances) -> Result<Matrix, OptimalityError> {
    let d = p.dims();
    u.check(&d)?;
    let (x, y) = (&u.x[..], &u.y[..]);
    let active = active_sets(p, x, y, &u.xi, tols.active)?;
    if !active.beta.is_empty() {
        return Err(OptimalityError::StrictComplementarityViolated(active.beta));
    }
    let w = active.w_diag(d.s);
    let k = kkt_jacobian(p, x, y, &u.mu, &u.xi, &w)?;
    let lag = lower_lagrangian(p, x, y, &u.mu, &u.xi)?;
    let mut gx = jacobian_x(p.lower_ineq(), x, y)?;
    for (l, &wl) in w.iter().enumerate() {
        if wl {
            gx.row_mut(l).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let x_cols = Matrix::vstack(&[&lag.hess_yx, &jacobian_x(p.lower_eq(), x, y)?, &gx]);

    let cols = d.primal_dual_len();
    let mut a = Matrix::zeros(d.p + d.kkt_len(), cols);
    a.set_block(0, 0, &jacobian(p.upper_eq(), x, y)?);
    a.set_block(d.p, 0, &x_cols);
    a.set_block(d.p, d.n, &k);
    Ok(a)
}

/// Gradients in `u` of the upper inequalities with `|G_i| <= τ_act`.
fn active_upper(p: &BilevelProblem, u: &PrimalDualPoint, tau: f64) -> Result<(Vec<usize>, Matrix), OptimalityError> {
    let d = p.dims();
    let values = fp_constraints(p, u)?.upper_ineq;
    let idx: Vec<usize> = (0..d.q).filter(|&i| values[i].abs() <= tau).collect();
    let jac = jacobian(p.upper_ineq(), &u.x, &u.y)?;
    let mut rows = Matrix::zeros(idx.len(), d.primal_dual_len());
    for (r, &i) in idx.iter().enumerate() {
        rows.row_mut(r)[..d.n + d.m].copy_from_slice(jac.row(i));
    }
    Ok((idx, rows))
}

fn full_row_rank(a: &Matrix, rel: f64) -> (bool, Option<f64>) {
    if a.rows() == 0 {
        return (true, None);
    }
    if a.rows() > a.cols() {
        return (false, Some(0.0));
    }
    let sv = singular_values(a);
    let max = sv[0];
    let min = *sv.last().unwrap();
    (min > rel * (1.0 + max), Some(min))
}

/// MFCQ of the reformulation: `A` has full row rank and some `d ∈ ker A`
/// strictly decreases every active upper inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct MfcqReport {
    pub holds: bool,
    pub rank_ok: bool,
    /// Smallest singular value of `A`; `None` when `A` has no rows.
    pub min_singular_value: Option<f64>,
    /// Active upper inequalities `I_G`.
    pub active_upper: Vec<usize>,
    /// Optimal `t` of `max t s.t. A d = 0, ∇G_i d + t <= 0, d ∈ [-1, 1], t ∈ [0, 1]`;
    /// `None` when `I_G` is empty.
    pub margin: Option<f64>,
    pub direction: Option<Vec<f64>>,
}

pub fn check_mfcq_fp(p: &BilevelProblem, u: &PrimalDualPoint, tols: &Tolerances) -> Result<MfcqReport, OptimalityError> {
    let a = matrix_a(p, u, tols)?;
    let (rank_ok, min_singular_value) = full_row_rank(&a, tols.licq_rel);
    let (active_upper, grads) = active_upper(p, u, tols.active)?;
    let (margin, direction) = if active_upper.is_empty() {
        (None, None)
    } else {
        let nu = a.cols();
        let mut eq = Matrix::zeros(a.rows(), nu + 1);
        eq.set_block(0, 0, &a);
        let mut ineq = Matrix::zeros(grads.rows(), nu + 1);
        ineq.set_block(0, 0, &grads);
        for r in 0..grads.rows() {
            ineq[(r, nu)] = 1.0;
        }
        let mut objective = vec![0.0; nu + 1];
        objective[nu] = 1.0;
        let mut lower = vec![-1.0; nu + 1];
        let mut upper = vec![1.0; nu + 1];
        lower[nu] = 0.0;
        upper[nu] = 1.0;
        let lp = LpProblem::with_inequalities(
            objective,
            eq,
            vec![0.0; a.rows()],
            &ineq,
            &vec![0.0; grads.rows()],
            lower,
            upper,
        )?;
        let sol = lp_maximize(&lp)?;
        (Some(sol.value), Some(sol.solution[..nu].to_vec()))
    };
    let holds = rank_ok && margin.map_or(true, |t| t > tols.mfcq);
    Ok(MfcqReport {
        holds,
        rank_ok,
        min_singular_value,
        active_upper,
        margin,
        direction,
    })
}

/// `𝒞 = {d : A d = 0, ∇G_i d <= 0 (i ∈ I_G), ∇F d <= 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeRep {
    pub eq_matrix: Matrix,
    pub active_ineq: Matrix,
    pub objective_row: Vec<f64>,
    /// Orthonormal columns spanning the cone when it is a subspace, or the
    /// smallest subspace this crate can certify to contain it.
    pub subspace_basis: Matrix,
    /// Some active `G_i` has `λ_G,i <= τ_act`, so `subspace_basis` spans a
    /// superset of the cone.
    pub over_approximation: bool,
    pub active_upper: Vec<usize>,
}

impl ConeRep {
    pub fn dim(&self) -> usize {
        self.subspace_basis.cols()
    }
}

pub fn critical_cone_fp(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    lam: &UpperMultiplier,
    tols: &Tolerances,
) -> Result<ConeRep, OptimalityError> {
    check_multiplier(p, u, lam)?;
    let d = p.dims();
    let a = matrix_a(p, u, tols)?;
    let (active_upper, grads) = active_upper(p, u, tols.active)?;
    let mut objective_row = vec![0.0; d.primal_dual_len()];
    objective_row[..d.n + d.m].copy_from_slice(&p.upper_objective().grad(&u.x, &u.y)?);

    // with a positive multiplier the inequality holds with equality on the cone
    let strict: Vec<usize> = (0..active_upper.len())
        .filter(|&r| lam.upper_ineq[active_upper[r]] > tols.active)
        .collect();
    let over_approximation = strict.len() < active_upper.len();
    let mut rows = a.to_rows();
    rows.extend(strict.iter().map(|&r| grads.row(r).to_vec()));
    let stacked = Matrix::from_row_vecs(&rows, d.primal_dual_len());
    let subspace_basis = nullspace_basis(&stacked, tols.licq_rel * (1.0 + stacked.max_abs()));
    Ok(ConeRep {
        eq_matrix: a,
        active_ineq: grads,
        objective_row,
        subspace_basis,
        over_approximation,
        active_upper,
    })
}

/// Natural residual `σ(u, λ) = ‖(∇_u L; λ - Π_{K°}(λ + G̃(u)))‖₂`.
///
/// `Π_{K°}` clips `λ_G` at zero and leaves the other blocks free, so the
/// equality blocks contribute `-G̃` and the `G` block `λ_G - max(λ_G + G, 0)`.
pub fn natural_residual(p: &BilevelProblem, u: &PrimalDualPoint, lam: &UpperMultiplier) -> Result<f64, OptimalityError> {
    let (_, grad) = fp_lagrangian_grad(p, u, lam)?;
    let c = fp_constraints(p, u)?;
    let mut sq: f64 = grad.iter().map(|v| v * v).sum();
    for v in c.upper_eq.iter().chain(&c.stationarity).chain(&c.lower_eq).chain(&c.complementarity) {
        sq += v * v;
    }
    for (l, g) in lam.upper_ineq.iter().zip(&c.upper_ineq) {
        let r = l - (l + g).max(0.0);
        sq += r * r;
    }
    Ok(sq.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderReport {
    pub holds: bool,
    pub sigma: f64,
    /// `‖∇_u L‖₂`
    pub gradient_norm: f64,
    /// Distance of `G̃(u)` from `K`.
    pub infeasibility: f64,
    /// `λ_G >= 0`.
    pub in_polar_cone: bool,
}

/// First-order conditions: `σ(u, λ) <= tols.kkt`.
pub fn check_first_order_fp(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    lam: &UpperMultiplier,
    tols: &Tolerances,
) -> Result<FirstOrderReport, OptimalityError> {
    let sigma = natural_residual(p, u, lam)?;
    let (_, grad) = fp_lagrangian_grad(p, u, lam)?;
    Ok(FirstOrderReport {
        holds: sigma <= tols.kkt,
        sigma,
        gradient_norm: norm2(&grad),
        infeasibility: fp_constraints(p, u)?.infeasibility(),
        in_polar_cone: lam.in_polar_cone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Necessary,
    Sufficient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderReport {
    pub mode: Mode,
    pub holds: bool,
    /// Smallest eigenvalue of `Zᵀ ∇²_uu L Z` for the orthonormal cone basis `Z`.
    pub min_eig: f64,
    pub cone_dim: usize,
    /// The cone basis spans a superset of the critical cone; a necessary
    /// verdict is then only indicative.
    pub over_approximation: bool,
    /// `[A; ∇G_I]` has full row rank, so `λ` is the only multiplier.
    /// When false the verdict is for the supplied `λ` only.
    pub multiplier_unique: bool,
    pub reduced_hessian: Matrix,
}

/// `Bᵀ ∇²_uu L B` and its smallest eigenvalue for a caller-chosen basis `B`.
pub fn reduced_quadratic_form(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    lam: &UpperMultiplier,
    basis: &Matrix,
) -> Result<(Matrix, f64), OptimalityError> {
    let h = fp_hessian(p, u, lam)?;
    let form = basis.transpose().matmul(&h).matmul(basis);
    let min = min_eig_sym(&form)?;
    Ok((form, min))
}

/// Second-order conditions on the critical cone: the reduced Hessian is
/// positive semidefinite (`Necessary`) or positive definite (`Sufficient`)
/// up to `τ_psd`.
pub fn check_second_order_fp(
    p: &BilevelProblem,
    u: &PrimalDualPoint,
    lam: &UpperMultiplier,
    mode: Mode,
    tols: &Tolerances,
) -> Result<SecondOrderReport, OptimalityError> {
    let cone = critical_cone_fp(p, u, lam, tols)?;
    let mut rows = cone.eq_matrix.to_rows();
    rows.extend(cone.active_ineq.to_rows());
    let (multiplier_unique, _) =
        full_row_rank(&Matrix::from_row_vecs(&rows, cone.eq_matrix.cols()), tols.licq_rel);
    if cone.dim() == 0 {
        return Err(OptimalityError::EmptyCone);
    }
    let (reduced_hessian, min_eig) = reduced_quadratic_form(p, u, lam, &cone.subspace_basis)?;
    let holds = match mode {
        Mode::Necessary => min_eig >= -tols.psd,
        Mode::Sufficient => min_eig > tols.psd,
    };
    Ok(SecondOrderReport {
        mode,
        holds,
        min_eig,
        cone_dim: cone.dim(),
        over_approximation: cone.over_approximation,
        multiplier_unique,
        reduced_hessian,
    })
}
