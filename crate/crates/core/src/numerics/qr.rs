use super::Matrix;

/// Householder QR with column pivoting of an `m x k` matrix:
/// `M P = Q R`, with `Q` accumulated explicitly (`m x m`).
struct PivotedQr {
    q: Matrix,
    r_diag: Vec<f64>,
}

fn pivoted_qr(mat: &Matrix) -> PivotedQr {
    let m = mat.rows();
    let k = mat.cols();
    let mut a = mat.clone();
    let mut q = Matrix::identity(m);
    let steps = m.min(k);
    let mut r_diag = Vec::with_capacity(steps);

    for j in 0..steps {
        // pivot: remaining column with largest trailing norm
        let (pc, _) = (j..k)
            .map(|c| (c, (j..m).map(|i| a[(i, c)] * a[(i, c)]).sum::<f64>()))
            .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pc != j {
            for i in 0..m {
                let tmp = a[(i, j)];
                a[(i, j)] = a[(i, pc)];
                a[(i, pc)] = tmp;
            }
        }

        let norm = (j..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            r_diag.push(0.0);
            continue;
        }
        let alpha = if a[(j, j)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| a[(i, j)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            r_diag.push(alpha);
            continue;
        }
        // apply H = I - 2 v vᵀ / (vᵀ v) to the trailing columns of `a`
        for c in j..k {
            let s: f64 = (j..m).map(|i| v[i - j] * a[(i, c)]).sum::<f64>() * 2.0 / vnorm2;
            for i in j..m {
                a[(i, c)] -= s * v[i - j];
            }
        }
        // accumulate Q := Q H
        for row in 0..m {
            let s: f64 = (j..m).map(|i| q[(row, i)] * v[i - j]).sum::<f64>() * 2.0 / vnorm2;
            for i in j..m {
                q[(row, i)] -= s * v[i - j];
            }
        }
        r_diag.push(a[(j, j)]);
    }
    PivotedQr { q, r_diag }
}

/// Numerical rank: number of pivoted-QR diagonal entries above `tol`.
pub fn rank(a: &Matrix, tol: f64) -> usize {
    if a.rows() == 0 || a.cols() == 0 {
        return 0;
    }
    pivoted_qr(a).r_diag.iter().filter(|d| d.abs() > tol).count()
}

/// Orthonormal basis (as columns) of `{d : A d = 0}`.
///
/// Computed from a column-pivoted QR of `Aᵀ`: the trailing columns of `Q`
/// beyond the numerical rank span the orthogonal complement of the row space.
pub fn nullspace_basis(a: &Matrix, tol: f64) -> Matrix {
    let n = a.cols();
    if a.rows() == 0 {
        return Matrix::identity(n);
    }
    let qr = pivoted_qr(&a.transpose());
    let r = qr.r_diag.iter().filter(|d| d.abs() > tol).count();
    qr.q.block(0, r, n, n - r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nullspace_of_a_single_row() {
        let z = nullspace_basis(&Matrix::from_rows(&[[1.0, 1.0]]), 1e-12);
        assert_eq!(z.cols(), 1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((z[(0, 0)].abs() - s).abs() < 1e-14);
        assert!((z[(0, 0)] + z[(1, 0)]).abs() < 1e-14);
    }

    #[test]
    fn nullspace_trivial_cases() {
        assert_eq!(nullspace_basis(&Matrix::identity(2), 1e-12).cols(), 0);
        let z = nullspace_basis(&Matrix::zeros(1, 2), 1e-12);
        assert_eq!(z.cols(), 2);
        let ztz = z.transpose().matmul(&z);
        assert!(ztz.sub(&Matrix::identity(2)).max_abs() < 1e-14);
        assert_eq!(nullspace_basis(&Matrix::zeros(0, 3), 1e-12).cols(), 3);
    }

    #[test]
    fn rank_of_repeated_rows() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        assert_eq!(rank(&a, 1e-10), 2);
        assert_eq!(nullspace_basis(&a, 1e-10).cols(), 1);
    }
}
