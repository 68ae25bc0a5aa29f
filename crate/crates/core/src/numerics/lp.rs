use super::{dot, Matrix, NumericsError};

/// Phase-1 optimum above which the feasible region is declared empty.
pub const INFEASIBILITY_TOL: f64 = 1e-9;

const COST_EPS: f64 = 1e-11;
const PIVOT_EPS: f64 = 1e-11;

/// `maximize cᵀz  s.t.  A z = b,  l <= z <= u` with finite bounds.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub eq_matrix: Matrix,
    pub eq_rhs: Vec<f64>,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub solution: Vec<f64>,
}

impl LpProblem {
    pub fn new(
        objective: Vec<f64>,
        eq_matrix: Matrix,
        eq_rhs: Vec<f64>,
        lower_bounds: Vec<f64>,
        upper_bounds: Vec<f64>,
    ) -> Result<Self, NumericsError> {
        let n = objective.len();
        for len in [lower_bounds.len(), upper_bounds.len(), eq_matrix.cols()] {
            if len != n {
                return Err(NumericsError::DimensionMismatch { expected: n, found: len });
            }
        }
        if eq_rhs.len() != eq_matrix.rows() {
            return Err(NumericsError::DimensionMismatch {
                expected: eq_matrix.rows(),
                found: eq_rhs.len(),
            });
        }
        for (l, u) in lower_bounds.iter().zip(&upper_bounds) {
            if !(l.is_finite() && u.is_finite()) || l > u {
                return Err(NumericsError::InvalidBounds { lower: *l, upper: *u });
            }
        }
        Ok(Self {
            objective,
            eq_matrix,
            eq_rhs,
            lower_bounds,
            upper_bounds,
        })
    }

    /// Adds `ineq_matrix · z <= ineq_rhs` through bounded slack columns
    /// appended after the original variables. The slack upper bound is the
    /// largest slack any point of the box can produce, so the box stays finite.
    pub fn with_inequalities(
        objective: Vec<f64>,
        eq_matrix: Matrix,
        eq_rhs: Vec<f64>,
        ineq_matrix: &Matrix,
        ineq_rhs: &[f64],
        lower_bounds: Vec<f64>,
        upper_bounds: Vec<f64>,
    ) -> Result<Self, NumericsError> {
        let n = objective.len();
        let k = ineq_matrix.rows();
        if ineq_matrix.cols() != n || eq_matrix.cols() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: ineq_matrix.cols().min(eq_matrix.cols()),
            });
        }
        if ineq_rhs.len() != k {
            return Err(NumericsError::DimensionMismatch { expected: k, found: ineq_rhs.len() });
        }
        let total = n + k;
        let mut a = Matrix::zeros(eq_matrix.rows() + k, total);
        a.set_block(0, 0, &eq_matrix);
        a.set_block(eq_matrix.rows(), 0, ineq_matrix);
        let mut lower = lower_bounds.clone();
        let mut upper = upper_bounds.clone();
        for i in 0..k {
            a[(eq_matrix.rows() + i, n + i)] = 1.0;
            let min_row: f64 = ineq_matrix
                .row(i)
                .iter()
                .zip(lower_bounds.iter().zip(&upper_bounds))
                .map(|(c, (l, u))| (c * l).min(c * u))
                .sum();
            lower.push(0.0);
            upper.push((ineq_rhs[i] - min_row).max(0.0));
        }
        let mut obj = objective;
        obj.resize(total, 0.0);
        let mut rhs = eq_rhs;
        rhs.extend_from_slice(ineq_rhs);
        Self::new(obj, a, rhs, lower, upper)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

struct Tableau {
    t: Matrix,
    x_basic: Vec<f64>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    range: Vec<f64>,
    is_basic: Vec<bool>,
}

impl Tableau {
    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for (i, &b) in self.basis.iter().enumerate() {
            d -= cost[b] * self.t[(i, j)];
        }
        d
    }

    /// Runs the bounded-variable primal simplex with Bland's rule.
    fn optimize(&mut self, cost: &[f64]) -> Result<(), NumericsError> {
        let ncols = self.t.cols();
        let m = self.t.rows();
        // Bland's rule terminates; the cap only guards against numerical loops.
        let cap = 50_000 + 200 * ncols * (m + 1);
        for _ in 0..cap {
            let entering = (0..ncols).find(|&j| {
                if self.is_basic[j] || self.range[j] <= 0.0 {
                    return false;
                }
                let d = self.reduced_cost(cost, j);
                (d > COST_EPS && !self.at_upper[j]) || (d < -COST_EPS && self.at_upper[j])
            });
            let Some(j) = entering else {
                return Ok(());
            };
            let dir = if self.at_upper[j] { -1.0 } else { 1.0 };

            let mut theta = self.range[j];
            let mut leave: Option<(usize, bool)> = None; // (row, goes to upper)
            for i in 0..m {
                let a = self.t[(i, j)] * dir;
                let b = self.basis[i];
                let (limit, to_upper) = if a > PIVOT_EPS {
                    (self.x_basic[i].max(0.0) / a, false)
                } else if a < -PIVOT_EPS && self.range[b].is_finite() {
                    ((self.range[b] - self.x_basic[i]).max(0.0) / -a, true)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if limit < theta - 1e-14 => true,
                    Some((r, _)) => limit <= theta + 1e-14 && b < self.basis[r],
                    None => false,
                };
                if better {
                    theta = limit;
                    leave = Some((i, to_upper));
                }
            }
            if !theta.is_finite() {
                return Err(NumericsError::Unbounded);
            }

            for i in 0..m {
                self.x_basic[i] -= dir * theta * self.t[(i, j)];
            }
            match leave {
                None => {
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some((r, to_upper)) => {
                    let start = if self.at_upper[j] { self.range[j] } else { 0.0 };
                    let old = self.basis[r];
                    self.is_basic[old] = false;
                    self.at_upper[old] = to_upper;
                    self.basis[r] = j;
                    self.is_basic[j] = true;
                    self.at_upper[j] = false;
                    self.x_basic[r] = start + dir * theta;
                    self.pivot(r, j);
                }
            }
        }
        Err(NumericsError::NoConvergence { iterations: cap })
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let ncols = self.t.cols();
        let p = self.t[(r, j)];
        for c in 0..ncols {
            self.t[(r, c)] /= p;
        }
        for i in 0..self.t.rows() {
            if i == r {
                continue;
            }
            let f = self.t[(i, j)];
            if f == 0.0 {
                continue;
            }
            for c in 0..ncols {
                let v = self.t[(r, c)];
                self.t[(i, c)] -= f * v;
            }
        }
    }

    fn value_of(&self, j: usize) -> f64 {
        if let Some(i) = self.basis.iter().position(|&b| b == j) {
            self.x_basic[i]
        } else if self.at_upper[j] {
            self.range[j]
        } else {
            0.0
        }
    }
}

/// Maximizes a bounded LP with a two-phase primal simplex (Bland's rule).
pub fn lp_maximize(p: &LpProblem) -> Result<LpSolution, NumericsError> {
    let n = p.num_vars();
    let m = p.eq_matrix.rows();
    let ncols = n + m;

    // shift to z' = z - l in [0, u - l] and make the right-hand side nonnegative
    let shift = p.eq_matrix.matvec(&p.lower_bounds);
    let mut t = Matrix::zeros(m, ncols);
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let b = p.eq_rhs[i] - shift[i];
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * p.eq_matrix[(i, j)];
        }
        t[(i, n + i)] = 1.0;
        rhs[i] = sign * b;
    }
    let mut range: Vec<f64> = p
        .lower_bounds
        .iter()
        .zip(&p.upper_bounds)
        .map(|(l, u)| u - l)
        .collect();
    range.extend(std::iter::repeat(f64::INFINITY).take(m));

    let mut is_basic = vec![false; ncols];
    for flag in is_basic.iter_mut().skip(n) {
        *flag = true;
    }
    let mut tab = Tableau {
        t,
        x_basic: rhs,
        basis: (n..ncols).collect(),
        at_upper: vec![false; ncols],
        range,
        is_basic,
    };

    let mut phase1 = vec![0.0; ncols];
    for c in phase1.iter_mut().skip(n) {
        *c = -1.0;
    }
    tab.optimize(&phase1)?;
    let infeasibility: f64 = (n..ncols).map(|j| tab.value_of(j)).sum();
    if infeasibility > INFEASIBILITY_TOL {
        return Err(NumericsError::Infeasible { phase1: infeasibility });
    }

    // artificials are pinned at zero for phase 2
    for j in n..ncols {
        tab.range[j] = 0.0;
        tab.at_upper[j] = false;
    }
    for (i, &b) in tab.basis.iter().enumerate() {
        if b >= n {
            tab.x_basic[i] = 0.0;
        }
    }
    let mut phase2 = p.objective.clone();
    phase2.resize(ncols, 0.0);
    tab.optimize(&phase2)?;

    let solution: Vec<f64> = (0..n)
        .map(|j| (p.lower_bounds[j] + tab.value_of(j)).clamp(p.lower_bounds[j], p.upper_bounds[j]))
        .collect();
    Ok(LpSolution {
        value: dot(&p.objective, &solution),
        solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_d_t(ineq: &Matrix, rhs: &[f64]) -> LpProblem {
        // variables (d, t): d in [-1, 1], t in [0, 1], maximize t
        LpProblem::with_inequalities(
            vec![0.0, 1.0],
            Matrix::zeros(0, 2),
            vec![],
            ineq,
            rhs,
            vec![-1.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn trivially_bounded_objective() {
        let p = box_d_t(&Matrix::from_rows(&[[0.0, 1.0]]), &[1.0]);
        let s = lp_maximize(&p).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pinched_direction_gives_zero() {
        let p = box_d_t(&Matrix::from_rows(&[[1.0, 1.0], [-1.0, 1.0]]), &[0.0, 0.0]);
        let s = lp_maximize(&p).unwrap();
        assert!(s.value.abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn equality_vertex() {
        let p = LpProblem::new(
            vec![1.0, 0.0],
            Matrix::from_rows(&[[1.0, 1.0]]),
            vec![0.0],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let s = lp_maximize(&p).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.solution[0] - 1.0).abs() < 1e-12 && (s.solution[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_equalities() {
        let p = LpProblem::new(
            vec![1.0],
            Matrix::from_rows(&[[1.0]]),
            vec![5.0],
            vec![-1.0],
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(lp_maximize(&p), Err(NumericsError::Infeasible { .. })));
    }

    #[test]
    fn rejects_crossed_bounds() {
        let r = LpProblem::new(vec![1.0], Matrix::zeros(0, 1), vec![], vec![1.0], vec![0.0]);
        assert!(matches!(r, Err(NumericsError::InvalidBounds { .. })));
    }
}
