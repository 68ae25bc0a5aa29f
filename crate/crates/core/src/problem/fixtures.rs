//! Built-in problems with hand-checkable ground truth at every stage.
//!
//! * `P1`: lower level is a clip map, `y(x) = max(x, 1)`.
//! * `P2`: lower level is a projection onto `y1 + y2 = 1`.
//! * `P3`: a nonconvex lower level whose bilevel feasible set is the curve
//!   `y = x² - 1` plus the isolated point `(0, 1)`.
//! * `P4`: lower level is `y(x) = max(x, 0)`, solution on the active branch.

use super::{load_problem, BilevelProblem, PrimalDualPoint, ProblemError};

const P1: &str = "\
dims n=1 m=1
upper.objective (x1 - 2)^2 + y1
upper.ineq -x1 - 3
lower.objective 0.5*(y1 - x1)^2
lower.ineq 1 - y1
";

const P2: &str = "\
dims n=2 m=2
upper.objective 0.5*(x1^2 + x2^2) + 0.5*(y1^2 + y2^2)
lower.objective 0.5*((y1 - x1)^2 + (y2 - x2)^2)
lower.eq y1 + y2 - 1
";

const P3: &str = "\
dims n=1 m=1
upper.objective y1
upper.ineq x1 - 1
upper.ineq -x1 - 1
lower.objective x1^2 + y1^2
lower.ineq (x1^2 - y1 - 1)*(x1^2 + y1^2 - 1)
";

const P4: &str = "\
dims n=1 m=1
upper.objective (x1 + 1)^2 + y1^2
upper.ineq -x1 - 2
lower.objective 0.5*(y1 - x1)^2
lower.ineq -y1
";

pub fn fixture_names() -> &'static [&'static str] {
    &["P1", "P2", "P3", "P4"]
}

/// Problem-file text of a fixture.
pub fn fixture_text(name: &str) -> Result<&'static str, ProblemError> {
    match name {
        "P1" => Ok(P1),
        "P2" => Ok(P2),
        "P3" => Ok(P3),
        "P4" => Ok(P4),
        other => Err(ProblemError::UnknownFixture(other.to_string())),
    }
}

pub fn fixture(name: &str) -> Result<BilevelProblem, ProblemError> {
    load_problem(fixture_text(name)?)
}

/// The hand-derived bilevel solution of a fixture, with lower multipliers.
///
/// `P3`'s point `(0, -1)` is returned with `xi = 0`; it is not a regular
/// KKT point of the lower level.
pub fn fixture_solution(name: &str) -> Result<PrimalDualPoint, ProblemError> {
    let pt = |x: &[f64], y: &[f64], mu: &[f64], xi: &[f64]| PrimalDualPoint::new(x, y, mu, xi);
    match name {
        // reduced objective (x-2)^2 + x on x > 1 is minimized at x = 3/2
        "P1" => Ok(pt(&[1.5], &[1.5], &[], &[0.0])),
        "P2" => Ok(pt(&[0.0, 0.0], &[0.5, 0.5], &[-0.5], &[])),
        "P3" => Ok(pt(&[0.0], &[-1.0], &[], &[0.0])),
        "P4" => Ok(pt(&[-1.0], &[0.0], &[], &[1.0])),
        other => Err(ProblemError::UnknownFixture(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_fixture() {
        assert!(matches!(fixture("P9"), Err(ProblemError::UnknownFixture(_))));
    }

    #[test]
    fn upper_objective_at_the_nonconvex_optimum() {
        let p = fixture("P3").unwrap();
        assert_eq!(p.upper_objective().value(&[0.0], &[-1.0]).unwrap(), -1.0);
    }

    #[test]
    fn nonconvex_feasible_set_facts() {
        let p = fixture("P3").unwrap();
        let g = &p.lower_ineq()[0];
        assert_eq!(g.value(&[0.0], &[-1.0]).unwrap(), 0.0);
        assert_eq!(g.value(&[0.0], &[0.0]).unwrap(), 1.0);
        for k in 0..=40 {
            let x = -0.95 + 0.0475 * k as f64;
            assert!(g.value(&[x], &[x * x - 1.0]).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn all_fixtures_load() {
        for name in fixture_names() {
            let p = fixture(name).unwrap();
            let s = fixture_solution(name).unwrap();
            assert!(s.check(&p.dims()).is_ok(), "{name}");
        }
    }
}
