use super::{Matrix, NumericsError};

/// Default step for first derivatives by central differences.
pub const FD_STEP_FIRST: f64 = 1e-5;
/// Default step for second derivatives (central differences of a gradient).
pub const FD_STEP_SECOND: f64 = 1e-4;

/// Central-difference Jacobian of a fallible vector map. Column `j` is
/// `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn try_fd_jacobian<F, E>(mut f: F, x: &[f64], h: f64) -> Result<Matrix, E>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    E: From<NumericsError>,
{
    if !(h > 0.0) {
        return Err(NumericsError::InvalidStep(h).into());
    }
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut rows = None;
    let mut probe = x.to_vec();
    for j in 0..n {
        probe[j] = x[j] + h;
        let plus = f(&probe)?;
        probe[j] = x[j] - h;
        let minus = f(&probe)?;
        probe[j] = x[j];
        if plus.len() != minus.len() || rows.is_some_and(|r| r != plus.len()) {
            return Err(NumericsError::DimensionMismatch {
                expected: rows.unwrap_or(plus.len()),
                found: minus.len(),
            }
            .into());
        }
        rows = Some(plus.len());
        if plus.iter().chain(&minus).any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite.into());
        }
        cols.push(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect::<Vec<_>>());
    }
    let rows = match rows {
        Some(r) => r,
        None => f(x)?.len(),
    };
    Ok(Matrix::from_cols(&cols, rows))
}

/// Central-difference Jacobian of an infallible vector map.
pub fn fd_jacobian<F>(mut f: F, x: &[f64], h: f64) -> Result<Matrix, NumericsError>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    try_fd_jacobian(|z| Ok::<_, NumericsError>(f(z)), x, h)
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
{
    let jac = fd_jacobian(|z| vec![f(z)], x, h)?;
    Ok(jac.row(0).to_vec())
}

/// Symmetrized central-difference Jacobian of a gradient map.
pub fn try_fd_hessian_of_gradient<F, E>(grad: F, x: &[f64], h: f64) -> Result<Matrix, E>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
    E: From<NumericsError>,
{
    let j = try_fd_jacobian(grad, x, h)?;
    Ok(j.add(&j.transpose()).scale(0.5))
}
