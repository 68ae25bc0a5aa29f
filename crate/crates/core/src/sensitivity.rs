//! Derivatives of the lower-level KKT map `x -> (y(x), mu(x), xi(x))`.
//!
//! Under the Jacobian uniqueness conditions the map is smooth near `x` and
//! its Jacobians solve the linearized KKT system
//!
//! ```text
//! K(x) [𝒥y; 𝒥mu; 𝒥xi] = -[∇²_yx 𝓛; 𝒥_x h; (I - W) 𝒥_x g]
//! ```
//!
//! with `W = diag(w)`, `w_i = 0` on active indices and `1` on inactive ones.

use thiserror::Error;

use crate::lower::{
    active_sets, kkt_jacobian, kkt_parameter_jacobian, kkt_residual, ActiveSets, LowerError,
    Tolerances,
};
use crate::numerics::{norm_inf, Lu, Matrix, NumericsError};
use crate::problem::BilevelProblem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("strict complementarity fails at lower constraints {0:?}")]
    StrictComplementarityViolated(Vec<usize>),
    #[error("K(x) is singular: {0}")]
    SingularK(NumericsError),
    #[error("not a lower KKT point (residual {residual:e})")]
    NotKkt { residual: f64 },
    #[error(transparent)]
    Lower(#[from] LowerError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    pub k: Matrix,
    pub w: Matrix,
    /// `m x n`
    pub jy: Matrix,
    /// `r x n`
    pub jmu: Matrix,
    /// `s x n`
    pub jxi: Matrix,
    /// Largest over smallest LU pivot of `K`.
    pub cond_estimate: f64,
    pub active: ActiveSets,
}

impl SensitivityResult {
    /// `(𝒥y; 𝒥mu; 𝒥xi)` stacked.
    pub fn stacked(&self) -> Matrix {
        Matrix::vstack(&[&self.jy, &self.jmu, &self.jxi])
    }
}

fn require_strict(active: &ActiveSets) -> Result<(), SensitivityError> {
    if active.beta.is_empty() {
        Ok(())
    } else {
        Err(SensitivityError::StrictComplementarityViolated(active.beta.clone()))
    }
}

/// `W` as a diagonal 0/1 matrix.
pub fn build_w(active: &ActiveSets, s: usize) -> Result<Matrix, SensitivityError> {
    require_strict(active)?;
    let w = active.w_diag(s);
    Ok(Matrix::diag(&w.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
}

pub fn build_k(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    xi: &[f64],
    active: &ActiveSets,
) -> Result<Matrix, SensitivityError> {
    require_strict(active)?;
    Ok(kkt_jacobian(p, x, y, mu, xi, &active.w_diag(p.dims().s))?)
}

/// Jacobians of the KKT map at a lower KKT point `(y, mu, xi)`.
pub fn implicit_jacobians(
    p: &BilevelProblem,
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    xi: &[f64],
    tols: &Tolerances,
) -> Result<SensitivityResult, SensitivityError> {
    let d = p.dims();
    let residual = norm_inf(&kkt_residual(p, x, y, mu, xi)?);
    if residual > tols.kkt {
        return Err(SensitivityError::NotKkt { residual });
    }
    let active = active_sets(p, x, y, xi, tols.active)?;
    let w = build_w(&active, d.s)?;
    let k = build_k(p, x, y, mu, xi, &active)?;
    let rhs = kkt_parameter_jacobian(p, x, y, mu, xi, &active.w_diag(d.s))?;
    let lu = Lu::factor(&k).map_err(SensitivityError::SingularK)?;
    let sol = lu.solve_matrix(&rhs.scale(-1.0)).map_err(SensitivityError::SingularK)?;
    Ok(SensitivityResult {
        jy: sol.block(0, 0, d.m, d.n),
        jmu: sol.block(d.m, 0, d.r, d.n),
        jxi: sol.block(d.m + d.r, 0, d.s, d.n),
        cond_estimate: lu.cond_estimate(),
        k,
        w,
        active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::fixture;

    fn sets(alpha: &[usize], gamma: &[usize]) -> ActiveSets {
        ActiveSets {
            alpha: alpha.to_vec(),
            beta: vec![],
            gamma: gamma.to_vec(),
        }
    }

    #[test]
    fn w_examples() {
        assert_eq!(build_w(&sets(&[0], &[]), 1).unwrap(), Matrix::from_rows(&[[0.0]]));
        assert_eq!(build_w(&sets(&[], &[0]), 1).unwrap(), Matrix::from_rows(&[[1.0]]));
        assert_eq!(build_w(&sets(&[0], &[1]), 2).unwrap(), Matrix::diag(&[0.0, 1.0]));
        let biactive = ActiveSets {
            beta: vec![0],
            ..Default::default()
        };
        assert!(matches!(
            build_w(&biactive, 1),
            Err(SensitivityError::StrictComplementarityViolated(_))
        ));
    }

    #[test]
    fn k_examples() {
        let p1 = fixture("P1").unwrap();
        let k = build_k(&p1, &[0.0], &[1.0], &[], &[1.0], &sets(&[0], &[])).unwrap();
        assert_eq!(k, Matrix::from_rows(&[[1.0, -1.0], [-1.0, 0.0]]));
        let k = build_k(&p1, &[2.0], &[2.0], &[], &[0.0], &sets(&[], &[0])).unwrap();
        assert_eq!(k, Matrix::from_rows(&[[1.0, -1.0], [0.0, -1.0]]));
        let p2 = fixture("P2").unwrap();
        let k = build_k(&p2, &[0.0, 0.0], &[0.5, 0.5], &[-0.5], &[], &sets(&[], &[])).unwrap();
        assert_eq!(
            k,
            Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0]])
        );
    }

    #[test]
    fn jacobian_examples() {
        let t = Tolerances::default();
        let p1 = fixture("P1").unwrap();
        let s = implicit_jacobians(&p1, &[0.0], &[1.0], &[], &[1.0], &t).unwrap();
        assert_eq!((s.jy[(0, 0)], s.jxi[(0, 0)]), (0.0, -1.0));
        let s = implicit_jacobians(&p1, &[2.0], &[2.0], &[], &[0.0], &t).unwrap();
        assert_eq!((s.jy[(0, 0)], s.jxi[(0, 0)]), (1.0, 0.0));

        let p2 = fixture("P2").unwrap();
        let s = implicit_jacobians(&p2, &[0.0, 0.0], &[0.5, 0.5], &[-0.5], &[], &t).unwrap();
        let expected = Matrix::from_rows(&[[0.5, -0.5], [-0.5, 0.5]]);
        assert!(s.jy.sub(&expected).max_abs() < 1e-15);
        assert!(s.jmu.sub(&Matrix::from_rows(&[[0.5, 0.5]])).max_abs() < 1e-15);
    }

    #[test]
    fn rejects_non_kkt_and_biactive_points() {
        let t = Tolerances::default();
        let p1 = fixture("P1").unwrap();
        assert!(matches!(
            implicit_jacobians(&p1, &[0.0], &[1.0], &[], &[0.0], &t),
            Err(SensitivityError::NotKkt { .. })
        ));
        assert!(matches!(
            implicit_jacobians(&p1, &[1.0], &[1.0], &[], &[0.0], &t),
            Err(SensitivityError::StrictComplementarityViolated(_))
        ));
    }
}
