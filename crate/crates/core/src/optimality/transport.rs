use super::OptimalityError;
use crate::lower::{solve_lower, Tolerances};
use crate::numerics::{try_fd_hessian_of_gradient, Matrix};
use crate::problem::{jacobian, BilevelProblem, PrimalDualPoint};
use crate::sensitivity::implicit_jacobians;

/// `U(x) = [I; 𝒥y; 𝒥mu; 𝒥xi]`, mapping `d_x` to a tangent direction in `u`.
pub fn u_transform(p: &BilevelProblem, u: &PrimalDualPoint, tols: &Tolerances) -> Result<Matrix, OptimalityError> {
    let s = implicit_jacobians(p, &u.x, &u.y, &u.mu, &u.xi, tols)?;
    Ok(Matrix::vstack(&[&Matrix::identity(p.dims().n), &s.jy, &s.jmu, &s.jxi]))
}

/// Gradient of `x -> F + λ_Hᵀ H + λ_Gᵀ G` along the solution map, i.e.
/// `∇_x L + 𝒥yᵀ ∇_y L` at `(x, y(x))`.
fn reduced_gradient(
    p: &BilevelProblem,
    x: &[f64],
    start: &PrimalDualPoint,
    upper_eq: &[f64],
    upper_ineq: &[f64],
    tols: &Tolerances,
) -> Result<Vec<f64>, OptimalityError> {
    let d = p.dims();
    let s = solve_lower(p, x, &start.y, &start.mu, &start.xi, tols.kkt * 1e-3, 100)?;
    if !s.converged {
        return Err(crate::lower::LowerError::SingularJacobian(
            crate::numerics::NumericsError::NoConvergence { iterations: s.iterations },
        )
        .into());
    }
    let sens = implicit_jacobians(p, x, &s.y, &s.mu, &s.xi, tols)?;
    let mut grad = p.upper_objective().grad(x, &s.y)?;
    for (fs, ls) in [(p.upper_eq(), upper_eq), (p.upper_ineq(), upper_ineq)] {
        let add = jacobian(fs, x, &s.y)?.tr_matvec(ls);
        grad.iter_mut().zip(add).for_each(|(a, b)| *a += b);
    }
    let (gx, gy) = grad.split_at(d.n);
    let mut out = gx.to_vec();
    for (o, v) in out.iter_mut().zip(sens.jy.tr_matvec(gy)) {
        *o += v;
    }
    Ok(out)
}

/// Finite-difference Hessian of `x -> L(x, y(x); λ_H, λ_G)` at `start.x`,
/// re-solving the lower level (warm-started from `start`) at every stencil
/// point and differencing the analytic reduced gradient.
pub fn sp_hessian_fd(
    p: &BilevelProblem,
    start: &PrimalDualPoint,
    upper_eq: &[f64],
    upper_ineq: &[f64],
    h_step: f64,
    tols: &Tolerances,
) -> Result<Matrix, OptimalityError> {
    start.check(&p.dims())?;
    try_fd_hessian_of_gradient(
        |x| reduced_gradient(p, x, start, upper_eq, upper_ineq, tols),
        &start.x,
        h_step,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::FD_STEP_SECOND;
    use crate::optimality::{fp_hessian, recover_multipliers};
    use crate::problem::{fixture, fixture_solution};

    #[test]
    fn u_examples() {
        let t = Tolerances::default();
        let p2 = fixture("P2").unwrap();
        let u = u_transform(&p2, &fixture_solution("P2").unwrap(), &t).unwrap();
        let expected = Matrix::from_rows(&[
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, -0.5],
            [-0.5, 0.5],
            [0.5, 0.5],
        ]);
        assert!(u.sub(&expected).max_abs() < 1e-15);

        let p1 = fixture("P1").unwrap();
        let u = u_transform(&p1, &PrimalDualPoint::new(&[0.0], &[1.0], &[], &[1.0]), &t).unwrap();
        assert_eq!(u.col(0), vec![1.0, 0.0, -1.0]);
        let u = u_transform(&p1, &PrimalDualPoint::new(&[2.0], &[2.0], &[], &[0.0]), &t).unwrap();
        assert_eq!(u.col(0), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn sp_hessian_examples() {
        let t = Tolerances::default();
        let p2 = fixture("P2").unwrap();
        let h = sp_hessian_fd(&p2, &fixture_solution("P2").unwrap(), &[], &[], FD_STEP_SECOND, &t).unwrap();
        let expected = Matrix::from_rows(&[[1.5, -0.5], [-0.5, 1.5]]);
        assert!(h.sub(&expected).max_abs() < 1e-4);

        let p1 = fixture("P1").unwrap();
        for u in [
            PrimalDualPoint::new(&[2.0], &[2.0], &[], &[0.0]),
            PrimalDualPoint::new(&[0.0], &[1.0], &[], &[1.0]),
        ] {
            let h = sp_hessian_fd(&p1, &u, &[], &[0.0], FD_STEP_SECOND, &t).unwrap();
            assert!((h[(0, 0)] - 2.0).abs() < 1e-4);
        }
    }

    #[test]
    fn transport_identity_on_projection_fixture() {
        let t = Tolerances::default();
        let p2 = fixture("P2").unwrap();
        let u = fixture_solution("P2").unwrap();
        let l = recover_multipliers(&p2, &u, &[], &[], &t).unwrap();
        let um = u_transform(&p2, &u, &t).unwrap();
        let transported = um.transpose().matmul(&fp_hessian(&p2, &u, &l).unwrap()).matmul(&um);
        let fd = sp_hessian_fd(&p2, &u, &[], &[], FD_STEP_SECOND, &t).unwrap();
        assert!(transported.sub(&fd).max_abs() < 1e-3);
    }
}
