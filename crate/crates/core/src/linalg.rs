//! Dense linear-algebra helpers shared by the exact pipelines.
//!
//! Linear solves go through nalgebra's partial-pivot LU with an explicit
//! conditioning check on the pivots. The symmetric eigensolver is a cyclic
//! Jacobi iteration; matrices here have at most a few hundred rows.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative pivot magnitude below which an LU factorisation is treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is numerically singular (pivot ratio {ratio:e})")]
    Singular { ratio: f64 },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
}

fn check_square(a: &DMatrix<f64>) -> Result<usize, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

/// Solves `a x = b` for a right-hand side matrix `b`.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    check_square(a)?;
    let lu = a.clone().lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in u.diagonal().iter() {
        lo = lo.min(d.abs());
        hi = hi.max(d.abs());
    }
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(ratio > PIVOT_TOLERANCE) {
        return Err(LinalgError::Singular { ratio });
    }
    lu.solve(b).ok_or(LinalgError::Singular { ratio })
}

pub fn solve_vector(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve(a, &rhs)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = check_square(a)?;
    solve(a, &DMatrix::identity(n, n))
}

/// Largest absolute difference between `a` and its transpose.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n.min(a.ncols()) {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Full eigendecomposition of a dense symmetric matrix.
///
/// Eigenvalues are sorted ascending and `vectors` holds the matching unit
/// eigenvectors as columns. Each eigenvector is oriented so that its
/// largest-magnitude component is positive (first such index on ties).
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 100;

impl SymmetricEigen {
    pub fn new(a: &DMatrix<f64>) -> Result<Self, LinalgError> {
        let n = check_square(a)?;
        let scale = max_abs(a).max(f64::MIN_POSITIVE);
        let asym = asymmetry(a);
        if asym > 1e-9 * scale {
            return Err(LinalgError::NotSymmetric(asym));
        }
        // Row-major working copy; symmetrise away rounding noise.
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
            }
        }
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }

        let mut converged = n < 2;
        for _ in 0..MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[p * n + q] * m[p * n + q];
                }
            }
            if off.sqrt() <= 1e-15 * scale {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[p * n + q];
                    if apq.abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let app = m[p * n + p];
                    let aqq = m[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = m[k * n + p];
                        let akq = m[k * n + q];
                        m[k * n + p] = c * akp - s * akq;
                        m[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = m[p * n + k];
                        let aqk = m[q * n + k];
                        m[p * n + k] = c * apk - s * aqk;
                        m[q * n + k] = s * apk + c * aqk;
                    }
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        if !converged {
            return Err(LinalgError::NoConvergence(MAX_SWEEPS));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| m[x * n + x].total_cmp(&m[y * n + y]));
        let values = DVector::from_iterator(n, order.iter().map(|&k| m[k * n + k]));
        let mut vectors = DMatrix::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            let mut pivot = 0;
            for r in 0..n {
                if v[r * n + k].abs() > v[pivot * n + k].abs() {
                    pivot = r;
                }
            }
            let sign = if v[pivot * n + k] < 0.0 { -1.0 } else { 1.0 };
            for r in 0..n {
                vectors[(r, col)] = sign * v[r * n + k];
            }
        }
        Ok(Self { values, vectors })
    }

    /// Largest residual `|A v - lambda v|` over all eigenpairs.
    pub fn max_residual(&self, a: &DMatrix<f64>) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.values.len() {
            let v = self.vectors.column(k);
            let r = a * v - v * self.values[k];
            worst = worst.max(r.norm());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_known_solution() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = &a * &x;
        let got = solve_vector(&a, &b).unwrap();
        assert!((got - x).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(inverse(&a), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn jacobi_matches_nalgebra_spectrum() {
        let n = 7;
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = ((i * 7 + j * 3) % 5) as f64 + if i == j { 3.0 } else { 0.0 };
            }
        }
        let a = &a + a.transpose();
        let ours = SymmetricEigen::new(&a).unwrap();
        let mut theirs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (x, y) in ours.values.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        assert!(ours.max_residual(&a) < 1e-9);
        let gram = ours.vectors.transpose() * &ours.vectors;
        assert!((gram - DMatrix::identity(n, n)).norm() < 1e-10);
    }

    #[test]
    fn eigenvector_sign_convention() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let e = SymmetricEigen::new(&a).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        for k in 0..2 {
            let col = e.vectors.column(k);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(SymmetricEigen::new(&a), Err(LinalgError::NotSymmetric(_))));
    }
}
