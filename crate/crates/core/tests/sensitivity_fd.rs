//! Implicit Jacobians against central differences of the re-solved lower level.

use bilocal::lower::{check_jacobian_uniqueness, solve_lower, Tolerances};
use bilocal::numerics::{fd_jacobian, Matrix, FD_STEP_FIRST};
use bilocal::problem::{fixture, load_problem, BilevelProblem};
use bilocal::sensitivity::implicit_jacobians;
use proptest::prelude::*;

fn resolve(p: &BilevelProblem, x: &[f64], start: &[f64]) -> Vec<f64> {
    let d = p.dims();
    let (m, r) = (d.m, d.r);
    let s = solve_lower(p, x, &start[..m], &start[m..m + r], &start[m + r..], 1e-13, 100).unwrap();
    assert!(s.converged, "lower solve failed at {x:?}");
    [s.y, s.mu, s.xi].concat()
}

fn check_point(name: &str, x: &[f64], y: &[f64], mu: &[f64], xi: &[f64]) {
    let p = fixture(name).unwrap();
    let sens = implicit_jacobians(&p, x, y, mu, xi, &Tolerances::default()).unwrap();
    let start = [y, mu, xi].concat();
    let fd = fd_jacobian(|xx| resolve(&p, xx, &start), x, FD_STEP_FIRST).unwrap();
    let diff = sens.stacked().sub(&fd).max_abs();
    assert!(diff < 1e-6, "{name} at {x:?}: |analytic - fd| = {diff:e}");
}

#[test]
fn fixtures_match_central_differences() {
    check_point("P1", &[0.0], &[1.0], &[], &[1.0]);
    check_point("P1", &[2.0], &[2.0], &[], &[0.0]);
    check_point("P2", &[0.0, 0.0], &[0.5, 0.5], &[-0.5], &[]);
    check_point("P2", &[1.0, -0.3], &[1.15, -0.15], &[-0.15], &[]);
    check_point("P4", &[-1.0], &[0.0], &[], &[1.0]);
    check_point("P4", &[0.5], &[0.5], &[], &[0.0]);
}

fn scaled_projection(a: [f64; 2], b: [f64; 2], c: f64, scale: f64) -> BilevelProblem {
    let text = format!(
        "dims n=2 m=2\n\
         upper.objective 0.5*(x1^2 + x2^2) + 0.5*(y1^2 + y2^2)\n\
         lower.objective {scale}*0.5*((y1 - {b0}*x1)^2 + (y2 - {b1}*x2)^2)\n\
         lower.eq {a0}*y1 + {a1}*y2 - {c}\n",
        b0 = b[0],
        b1 = b[1],
        a0 = a[0],
        a1 = a[1],
    );
    load_problem(&text).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn k_nonsingular_whenever_uniqueness_holds(
        a0 in 0.2f64..2.0, a1 in 0.2f64..2.0, b0 in 0.5f64..1.5, b1 in 0.5f64..1.5,
        c in 0.5f64..1.5, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0,
    ) {
        let p = scaled_projection([a0, a1], [b0, b1], c, 1.0);
        let x = [x0, x1];
        let s = solve_lower(&p, &x, &[0.0, 0.0], &[0.0], &[], 1e-13, 50).unwrap();
        prop_assert!(s.converged);
        let t = Tolerances::default();
        let rep = check_jacobian_uniqueness(&p, &x, &s.y, &s.mu, &s.xi, &t).unwrap();
        prop_assert!(rep.holds());
        prop_assert!(implicit_jacobians(&p, &x, &s.y, &s.mu, &s.xi, &t).is_ok());
    }

    #[test]
    fn scaling_the_lower_objective_leaves_jy_unchanged(
        a0 in 0.2f64..2.0, a1 in 0.2f64..2.0, scale in 0.1f64..10.0,
        x0 in -1.0f64..1.0, x1 in -1.0f64..1.0,
    ) {
        let t = Tolerances::default();
        let x = [x0, x1];
        let jy = |scale: f64| -> (Matrix, f64) {
            let p = scaled_projection([a0, a1], [1.0, 1.0], 1.0, scale);
            let s = solve_lower(&p, &x, &[0.0, 0.0], &[0.0], &[], 1e-13, 50).unwrap();
            let sens = implicit_jacobians(&p, &x, &s.y, &s.mu, &s.xi, &t).unwrap();
            (sens.jy, s.mu[0])
        };
        let (base, mu1) = jy(1.0);
        let (scaled, mu_c) = jy(scale);
        prop_assert!(base.sub(&scaled).max_abs() < 1e-8);
        prop_assert!((mu_c - scale * mu1).abs() < 1e-8 * (1.0 + mu1.abs() * scale));
    }
}
