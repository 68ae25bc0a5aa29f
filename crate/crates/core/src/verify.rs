//! Self-check suite over the built-in fixtures: derivatives against finite
//! differences, projection identities, Hessian structure, multiplier signs
//! along solver traces and parser round trips.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::alm::{alm_solve, aug_lagrangian, project_polar, AlmConfig};
use crate::lower::{kkt_residual, project_nonpositive, solve_lower, Tolerances};
use crate::numerics::{fd_gradient, fd_jacobian, norm2, norm_inf, sub_vec, Matrix, FD_STEP_FIRST, FD_STEP_SECOND};
use crate::optimality::{
    fp_hessian, fp_lagrangian_grad, natural_residual, recover_multipliers, sp_hessian_fd, u_transform, OptimalityError,
};
use crate::problem::{fixture, fixture_names, fixture_solution, load_problem, BilevelProblem, PrimalDualPoint, UpperMultiplier};
use crate::sensitivity::implicit_jacobians;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed error, or a failure message.
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

type Outcome = Result<(f64, f64), String>;

/// Fixtures whose hand solution is a regular lower-level KKT point.
const REGULAR: [&str; 3] = ["P1", "P2", "P4"];

fn fx(name: &str) -> BilevelProblem {
    fixture(name).expect("built-in fixture parses")
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// like f64::max, but NaN wins so a failed evaluation cannot hide
fn worsen(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

// largest entrywise gap, NaN if any entry is NaN or the lengths differ
fn diff_inf(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::NAN;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, worsen)
}

fn mat_diff(a: &Matrix, b: &Matrix) -> f64 {
    if (a.rows(), a.cols()) != (b.rows(), b.cols()) {
        return f64::NAN;
    }
    diff_inf(a.as_slice(), b.as_slice())
}

fn random_point(rng: &mut StdRng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

fn parser_round_trip() -> Outcome {
    for name in fixture_names() {
        let text = fx(name).to_problem_text();
        let again = load_problem(&text).map_err(err)?.to_problem_text();
        if again != text {
            return Err(format!("{name}: printed problem does not reparse to itself"));
        }
    }
    Ok((0.0, 0.0))
}

fn expression_gradients(rng: &mut StdRng) -> Outcome {
    let mut worst: f64 = 0.0;
    for name in fixture_names() {
        let p = fx(name);
        let d = p.dims();
        let funcs = std::iter::once(p.upper_objective())
            .chain(p.upper_eq())
            .chain(p.upper_ineq())
            .chain(std::iter::once(p.lower_objective()))
            .chain(p.lower_eq())
            .chain(p.lower_ineq());
        for f in funcs {
            for _ in 0..10 {
                let z = random_point(rng, d.n + d.m);
                let (x, y) = z.split_at(d.n);
                let g = f.grad(x, y).map_err(err)?;
                let fd = fd_gradient(|w| f.value(&w[..d.n], &w[d.n..]).unwrap_or(f64::NAN), &z, FD_STEP_FIRST)
                    .map_err(err)?;
                let h = f.hess(x, y).map_err(err)?;
                let hfd = fd_jacobian(|w| f.grad(&w[..d.n], &w[d.n..]).unwrap_or_default(), &z, FD_STEP_FIRST).map_err(err)?;
                let sym = f.hess_xy(x, y).map_err(err)?.sub(&f.hess_yx(x, y).map_err(err)?.transpose()).max_abs();
                let errs = [
                    diff_inf(&g, &fd) / (1.0 + norm_inf(&g)),
                    mat_diff(&h, &hfd) / (1.0 + h.max_abs()),
                    sym,
                ];
                worst = errs.into_iter().fold(worst, worsen);
            }
        }
    }
    Ok((worst, 1e-6))
}

fn projection_identities(rng: &mut StdRng) -> Outcome {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let v = random_point(rng, 6);
        let neg = project_nonpositive(&v);
        let pos = sub_vec(&v, &neg);
        let idempotent = norm_inf(&sub_vec(&project_nonpositive(&neg), &neg));
        let orthogonal = neg.iter().zip(&pos).map(|(a, b)| (a * b).abs()).fold(0.0, worsen);
        let complement_nonneg = pos.iter().map(|b| (-b).max(0.0)).fold(0.0, worsen);
        worst = [idempotent, orthogonal, complement_nonneg].into_iter().fold(worst, worsen);
        let d = fx("P3").dims();
        let lam = UpperMultiplier::unflatten(&d, &random_point(rng, d.multiplier_len())).map_err(err)?;
        let pl = project_polar(&lam);
        if !pl.in_polar_cone() || project_polar(&pl) != pl {
            return Err("polar projection is not an idempotent map into the cone".into());
        }
    }
    Ok((worst, 0.0))
}

fn lower_kkt_at_solutions() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in REGULAR {
        let p = fx(name);
        let u = fixture_solution(name).map_err(err)?;
        worst = worsen(worst, norm2(&kkt_residual(&p, &u.x, &u.y, &u.mu, &u.xi).map_err(err)?));
        let s = solve_lower(&p, &u.x, &vec![0.0; u.y.len()], &vec![0.0; u.mu.len()], &vec![0.0; u.xi.len()], 1e-12, 100)
            .map_err(err)?;
        worst = worsen(worst, diff_inf(&[s.y, s.mu, s.xi].concat(), &[&u.y[..], &u.mu, &u.xi].concat()));
    }
    Ok((worst, 1e-9))
}

fn implicit_jacobians_vs_fd() -> Outcome {
    let points = [
        ("P1", PrimalDualPoint::new(&[0.0], &[1.0], &[], &[1.0])),
        ("P1", PrimalDualPoint::new(&[2.0], &[2.0], &[], &[0.0])),
        ("P2", fixture_solution("P2").map_err(err)?),
        ("P4", fixture_solution("P4").map_err(err)?),
    ];
    let t = Tolerances::default();
    let mut worst: f64 = 0.0;
    for (name, u) in points {
        let p = fx(name);
        let sens = implicit_jacobians(&p, &u.x, &u.y, &u.mu, &u.xi, &t).map_err(err)?;
        let resolve = |x: &[f64]| {
            solve_lower(&p, x, &u.y, &u.mu, &u.xi, 1e-13, 100)
                .map(|s| [s.y, s.mu, s.xi].concat())
                .unwrap_or_default()
        };
        let fd = fd_jacobian(resolve, &u.x, FD_STEP_FIRST).map_err(err)?;
        worst = worsen(worst, mat_diff(&sens.stacked(), &fd));
    }
    Ok((worst, 1e-6))
}

fn random_state(rng: &mut StdRng, p: &BilevelProblem) -> Result<(PrimalDualPoint, UpperMultiplier), String> {
    let d = p.dims();
    let u = PrimalDualPoint::unflatten(&d, &random_point(rng, d.primal_dual_len())).map_err(err)?;
    let lam = UpperMultiplier::unflatten(&d, &random_point(rng, d.multiplier_len())).map_err(err)?;
    Ok((u, project_polar(&lam)))
}

fn lagrangian_derivatives(rng: &mut StdRng) -> Outcome {
    let mut worst: f64 = 0.0;
    for name in fixture_names() {
        let p = fx(name);
        let d = p.dims();
        for _ in 0..10 {
            let (u, lam) = random_state(rng, &p)?;
            let v = u.flatten();
            let at = |w: &[f64]| PrimalDualPoint::unflatten(&d, w).expect("length");
            let grad = match fp_lagrangian_grad(&p, &u, &lam) {
                Ok((_, g)) => g,
                Err(OptimalityError::NondifferentiablePoint { .. }) => continue,
                Err(e) => return Err(err(e)),
            };
            let fd = fd_gradient(|w| fp_lagrangian_grad(&p, &at(w), &lam).map(|r| r.0).unwrap_or(f64::NAN), &v, FD_STEP_FIRST)
                .map_err(err)?;
            let hess = fp_hessian(&p, &u, &lam).map_err(err)?;
            let hfd = fd_jacobian(|w| fp_lagrangian_grad(&p, &at(w), &lam).map(|r| r.1).unwrap_or_default(), &v, FD_STEP_SECOND)
                .map_err(err)?;
            let (al, ag) = aug_lagrangian(&p, &u, &lam, 3.0).map_err(err)?;
            let afd = fd_gradient(|w| aug_lagrangian(&p, &at(w), &lam, 3.0).map(|r| r.0).unwrap_or(f64::NAN), &v, FD_STEP_FIRST)
                .map_err(err)?;
            let errs = [
                diff_inf(&grad, &fd) / (1.0 + norm_inf(&grad)),
                mat_diff(&hess, &hfd) / (1.0 + hess.max_abs()),
                diff_inf(&ag, &afd) / (1.0 + norm_inf(&ag) + al.abs()),
            ];
            worst = errs.into_iter().fold(worst, worsen);
        }
    }
    Ok((worst, 1e-5))
}

fn dual_block_of_hessian_vanishes(rng: &mut StdRng) -> Outcome {
    let mut worst: f64 = 0.0;
    for name in fixture_names() {
        let p = fx(name);
        let d = p.dims();
        let nz = d.n + d.m;
        for _ in 0..10 {
            let (u, lam) = random_state(rng, &p)?;
            let h = match fp_hessian(&p, &u, &lam) {
                Ok(h) => h,
                Err(OptimalityError::NondifferentiablePoint { .. }) => continue,
                Err(e) => return Err(err(e)),
            };
            let k = d.r + d.s;
            worst = worsen(worst, h.block(nz, nz, k, k).max_abs()).max(h.asymmetry());
        }
    }
    Ok((worst, 0.0))
}

fn hessian_transport() -> Outcome {
    let t = Tolerances::default();
    let mut worst: f64 = 0.0;
    for name in REGULAR {
        let p = fx(name);
        let u = fixture_solution(name).map_err(err)?;
        let d = p.dims();
        let (le, li) = (vec![0.0; d.p], vec![0.0; d.q]);
        let lam = recover_multipliers(&p, &u, &le, &li, &t).map_err(err)?;
        let um: Matrix = u_transform(&p, &u, &t).map_err(err)?;
        let moved = um.transpose().matmul(&fp_hessian(&p, &u, &lam).map_err(err)?).matmul(&um);
        let fd = sp_hessian_fd(&p, &u, &le, &li, FD_STEP_SECOND, &t).map_err(err)?;
        worst = worsen(worst, mat_diff(&moved, &fd));
    }
    Ok((worst, 1e-3))
}

fn first_order_at_solutions() -> Outcome {
    let t = Tolerances::default();
    let mut worst: f64 = 0.0;
    for name in REGULAR {
        let p = fx(name);
        let u = fixture_solution(name).map_err(err)?;
        let d = p.dims();
        let lam = recover_multipliers(&p, &u, &vec![0.0; d.p], &vec![0.0; d.q], &t).map_err(err)?;
        worst = worsen(worst, natural_residual(&p, &u, &lam).map_err(err)?);
    }
    Ok((worst, 1e-9))
}

fn multipliers_stay_in_polar_cone() -> Outcome {
    let starts = [
        ("P1", PrimalDualPoint::new(&[0.0], &[1.0], &[], &[1.0])),
        ("P2", PrimalDualPoint::new(&[1.0, 1.0], &[0.3, 0.3], &[0.0], &[])),
        ("P4", PrimalDualPoint::new(&[0.0], &[0.5], &[], &[0.5])),
    ];
    let mut worst: f64 = 0.0;
    for (name, u0) in starts {
        let p = fx(name);
        let trace = alm_solve(&p, &u0, &UpperMultiplier::zeros(&p.dims()), &AlmConfig::default()).map_err(err)?;
        let lowest = trace
            .states()
            .iter()
            .flat_map(|(_, l)| l.upper_ineq.clone())
            .fold(0.0, f64::min);
        worst = worsen(worst, 0.0 - lowest);
        if !trace.converged() {
            return Err(format!("{name}: solver ended with {:?}", trace.status));
        }
    }
    Ok((worst, 0.0))
}

/// Runs every check with a fixed seed.
pub fn run_all() -> VerifyReport {
    let mut rng = StdRng::seed_from_u64(20_240_101);
    let mut checks = Vec::new();
    let mut record = |name: &'static str, outcome: Outcome| {
        let (passed, detail) = match outcome {
            Ok((e, tol)) => (e <= tol, format!("max error {e:.3e} (tolerance {tol:.0e})")),
            Err(msg) => (false, msg),
        };
        checks.push(Check { name, passed, detail });
    };
    record("parser round trip", parser_round_trip());
    record("expression derivatives vs finite differences", expression_gradients(&mut rng));
    record("projection identities", projection_identities(&mut rng));
    record("lower KKT system at fixture solutions", lower_kkt_at_solutions());
    record("implicit Jacobians vs finite differences", implicit_jacobians_vs_fd());
    record("reformulation derivatives vs finite differences", lagrangian_derivatives(&mut rng));
    record("dual block of the reformulation Hessian is zero", dual_block_of_hessian_vanishes(&mut rng));
    record("Hessian transport to the reduced problem", hessian_transport());
    record("first-order residual at fixture solutions", first_order_at_solutions());
    record("multipliers stay in the polar cone along solver traces", multipliers_stay_in_polar_cone());
    VerifyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let report = run_all();
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert_eq!(report.checks.len(), 10);
    }
}
