//! Brute-force bilevel search for problems with `n, m <= 2`.
//!
//! For each `x` on a uniform grid the lower level is solved by scanning a
//! `y` grid, keeping the grid-local minimizers and polishing each one by
//! golden-section search along every coordinate. Among the lower-level
//! global minimizers the one with the smallest upper objective (subject to
//! the upper constraints) is paired with `x`, and the best pair wins.
//!
//! Feasibility is tested with a tolerance: `g <= feas_tol` and
//! `|h| <= feas_tol`. Equality constraints are therefore only seen where their
//! zero set passes through grid nodes (up to rounding), as affine constraints
//! with grid-aligned coefficients do.

use thiserror::Error;

use crate::problem::BilevelProblem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid search supports n <= 2 and m <= 2, got n={n}, m={m}")]
    Unsupported { n: usize, m: usize },
    #[error("invalid grid: {0}")]
    Invalid(&'static str),
    #[error("grid has {0} points, above the limit of {MAX_POINTS}")]
    TooLarge(u64),
}

const MAX_POINTS: u64 = 2_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    /// Range applied to every `x` coordinate.
    pub x_range: (f64, f64),
    /// Range applied to every `y` coordinate.
    pub y_range: (f64, f64),
    pub step: f64,
    pub feas_tol: f64,
}

impl GridConfig {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), step: f64) -> Self {
        Self {
            x_range,
            y_range,
            step,
            feas_tol: 1e-9,
        }
    }
}

/// A polished grid-local minimizer of the lower level at a fixed `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerMinimizer {
    pub y: Vec<f64>,
    pub lower_value: f64,
    /// Within the tie tolerance of the smallest lower value at this `x`.
    pub global: bool,
    /// Satisfies the upper-level constraints.
    pub upper_feasible: bool,
    pub upper_value: f64,
    /// The point paired with `x` in the reported solution.
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub upper_value: f64,
    pub lower_value: f64,
    /// Every lower-level local minimizer found at the winning `x`.
    pub minimizers: Vec<LowerMinimizer>,
    pub x_points: usize,
    pub y_points: usize,
}

/// Tolerance under which two objective values count as equal.
pub fn tie_tol(f: f64) -> f64 {
    1e-9 * (1.0 + f.abs())
}

fn axis(range: (f64, f64), step: f64) -> Vec<f64> {
    let count = ((range.1 - range.0) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| range.0 + i as f64 * step).collect()
}

/// All points of the product grid, last coordinate fastest.
fn product(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for _ in 0..dim {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    pts
}

struct Lower<'a> {
    p: &'a BilevelProblem,
    x: &'a [f64],
    feas_tol: f64,
    eq_tol: f64,
}

impl Lower<'_> {
    /// Lower objective, or `+inf` outside the (tolerance-widened) feasible set.
    fn phi(&self, y: &[f64]) -> f64 {
        let feasible = self
            .p
            .lower_ineq()
            .iter()
            .all(|g| g.value(self.x, y).is_ok_and(|v| v <= self.feas_tol))
            && self
                .p
                .lower_eq()
                .iter()
                .all(|h| h.value(self.x, y).is_ok_and(|v| v.abs() <= self.eq_tol));
        if !feasible {
            return f64::INFINITY;
        }
        self.p.lower_objective().value(self.x, y).unwrap_or(f64::INFINITY)
    }

    fn golden(&self, y: &mut [f64], value: &mut f64, coord: usize, half_width: f64) {
        const INV_PHI: f64 = 0.618_033_988_749_894_9;
        let mut trial = y.to_vec();
        let mut at = |t: f64| {
            trial[coord] = t;
            self.phi(&trial)
        };
        let (mut a, mut b) = (y[coord] - half_width, y[coord] + half_width);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let (mut fc, mut fd) = (at(c), at(d));
        while b - a > 1e-12 * (1.0 + y[coord].abs()) {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = at(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = at(d);
            }
        }
        let (t, ft) = if fc <= fd { (c, fc) } else { (d, fd) };
        if ft < *value {
            y[coord] = t;
            *value = ft;
        }
    }

    /// Polished grid-local minimizers, one per connected plateau.
    fn minimizers(&self, ys: &[Vec<f64>], per_axis: usize, step: f64) -> Vec<(Vec<f64>, f64)> {
        let m = self.p.dims().m;
        let values: Vec<f64> = ys.iter().map(|y| self.phi(y)).collect();
        let offsets = product(&[-1.0, 0.0, 1.0], m);
        let neighbours = |idx: usize| -> Vec<usize> {
            let mut coords = vec![0usize; m];
            let mut rest = idx;
            for c in coords.iter_mut().rev() {
                *c = rest % per_axis;
                rest /= per_axis;
            }
            offsets
                .iter()
                .filter(|o| o.iter().any(|v| *v != 0.0))
                .filter_map(|o| {
                    let mut flat = 0usize;
                    for (c, d) in coords.iter().zip(o) {
                        let k = *c as i64 + *d as i64;
                        if k < 0 || k >= per_axis as i64 {
                            return None;
                        }
                        flat = flat * per_axis + k as usize;
                    }
                    Some(flat)
                })
                .collect()
        };
        let is_min: Vec<bool> = (0..ys.len())
            .map(|i| {
                values[i].is_finite()
                    && neighbours(i).iter().all(|&j| values[i] <= values[j] + tie_tol(values[i]))
            })
            .collect();

        let mut seen = vec![false; ys.len()];
        let mut out = Vec::new();
        for start in 0..ys.len() {
            if !is_min[start] || seen[start] {
                continue;
            }
            // flood-fill the plateau and keep its lowest node
            let mut stack = vec![start];
            seen[start] = true;
            let mut best = start;
            while let Some(i) = stack.pop() {
                if values[i] < values[best] {
                    best = i;
                }
                for j in neighbours(i) {
                    if is_min[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            let mut y = ys[best].clone();
            let mut v = values[best];
            for coord in 0..m {
                self.golden(&mut y, &mut v, coord, step);
            }
            out.push((y, v));
        }
        out
    }
}

fn upper_check(p: &BilevelProblem, x: &[f64], y: &[f64], feas_tol: f64, eq_tol: f64) -> (bool, f64) {
    let feasible = p.upper_ineq().iter().all(|g| g.value(x, y).is_ok_and(|v| v <= feas_tol))
        && p.upper_eq().iter().all(|h| h.value(x, y).is_ok_and(|v| v.abs() <= eq_tol));
    (feasible, p.upper_objective().value(x, y).unwrap_or(f64::INFINITY))
}

/// Lower-level local minimizers at `x`, classified against the upper level.
/// The selected one (if any) is the upper-feasible global lower minimizer with
/// the smallest upper objective.
pub fn lower_minimizers(p: &BilevelProblem, x: &[f64], cfg: &GridConfig) -> Vec<LowerMinimizer> {
    let ax = axis(cfg.y_range, cfg.step);
    let ys = product(&ax, p.dims().m);
    let eq_tol = cfg.feas_tol;
    let lower = Lower {
        p,
        x,
        feas_tol: cfg.feas_tol,
        eq_tol,
    };
    let found = lower.minimizers(&ys, ax.len(), cfg.step);
    let fmin = found.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let mut out: Vec<LowerMinimizer> = found
        .into_iter()
        .map(|(y, v)| {
            let (upper_feasible, upper_value) = upper_check(p, x, &y, cfg.feas_tol, eq_tol);
            LowerMinimizer {
                y,
                lower_value: v,
                global: v <= fmin + tie_tol(fmin),
                upper_feasible,
                upper_value,
                selected: false,
            }
        })
        .collect();
    let pick = out
        .iter()
        .enumerate()
        .filter(|(_, z)| z.global && z.upper_feasible)
        .min_by(|a, b| a.1.upper_value.total_cmp(&b.1.upper_value))
        .map(|(i, _)| i);
    if let Some(i) = pick {
        out[i].selected = true;
    }
    out
}

/// Runs the search. Returns `Ok(None)` when no grid `x` has a feasible pair.
pub fn grid_search(p: &BilevelProblem, cfg: &GridConfig) -> Result<Option<GridResult>, GridError> {
    let d = p.dims();
    if d.n > 2 || d.m > 2 {
        return Err(GridError::Unsupported { n: d.n, m: d.m });
    }
    let ranges_ok = [cfg.x_range, cfg.y_range].iter().all(|r| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1);
    if !(cfg.step > 0.0) || !cfg.step.is_finite() || !ranges_ok {
        return Err(GridError::Invalid("ranges must be finite with lo <= hi and step > 0"));
    }
    let xa = axis(cfg.x_range, cfg.step);
    let ya = axis(cfg.y_range, cfg.step);
    let total = (xa.len() as u64).saturating_pow(d.n as u32).saturating_mul((ya.len() as u64).saturating_pow(d.m as u32));
    if total > MAX_POINTS {
        return Err(GridError::TooLarge(total));
    }

    let mut best: Option<(Vec<f64>, Vec<LowerMinimizer>, usize, f64)> = None;
    for x in product(&xa, d.n) {
        let mins = lower_minimizers(p, &x, cfg);
        let Some(sel) = mins.iter().position(|z| z.selected) else { continue };
        let f = mins[sel].upper_value;
        let better = match &best {
            None => true,
            Some((_, _, _, fb)) => f < fb - tie_tol(*fb),
        };
        if better {
            best = Some((x, mins, sel, f));
        }
    }
    Ok(best.map(|(x, minimizers, sel, _)| {
        let chosen = &minimizers[sel];
        GridResult {
            x,
            y: chosen.y.clone(),
            upper_value: chosen.upper_value,
            lower_value: chosen.lower_value,
            x_points: xa.len().pow(d.n as u32),
            y_points: ya.len().pow(d.m as u32),
            minimizers,
        }
    }))
}
