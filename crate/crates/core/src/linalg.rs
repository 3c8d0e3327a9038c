//! Small dense kernels that the rest of the crate leans on.

use crate::{Error, Result};

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` couples row `i` to `i - 1` (`lower[0]` unused), `upper[i]`
/// couples row `i` to `i + 1` (last entry unused). The matrices assembled by
/// the ground model are strictly diagonally dominant so no pivoting is done.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Lower Cholesky factor of a symmetric positive definite matrix, stored as
/// packed rows so the inner products run over contiguous memory.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    // row i holds L[i][0..=i]
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    /// Factors the row-major `n x n` matrix `a`; only the lower triangle is read.
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky expects {} entries, got {}",
                n * n,
                a.len()
            )));
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut row = vec![0.0; i + 1];
            for j in 0..=i {
                let mut s = a[i * n + j];
                if j > 0 {
                    let lj = if j < i { &rows[j][..j] } else { &row[..j] };
                    s -= dot(&row[..j], lj);
                }
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "matrix not positive definite at pivot {i} ({s:e})"
                        )));
                    }
                    row[i] = s.sqrt();
                } else {
                    row[j] = s / rows[j][j];
                }
            }
            rows.push(row);
        }
        Ok(Self { n, rows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.rows[i];
            let s = b[i] - dot(&row[..i], &b[..i]);
            b[i] = s / row[i];
        }
        for i in (0..n).rev() {
            let xi = b[i] / self.rows[i][i];
            b[i] = xi;
            let row = &self.rows[i];
            for (bj, lij) in b[..i].iter_mut().zip(&row[..i]) {
                *bj -= lij * xi;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorise without reassociating
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let lower = [0.0, -1.0, -2.0, -0.5];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let upper = [-1.0, -1.5, -1.0, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        let mut dense = nalgebra::DMatrix::<f64>::zeros(4, 4);
        for i in 0..4 {
            dense[(i, i)] = diag[i];
            if i > 0 {
                dense[(i, i - 1)] = lower[i];
            }
            if i < 3 {
                dense[(i, i + 1)] = upper[i];
            }
        }
        let expected = dense.lu().solve(&nalgebra::DVector::from_row_slice(&rhs)).unwrap();
        for i in 0..4 {
            assert!((x[i] - expected[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let n = 7;
        let b = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let a = &b * b.transpose() + nalgebra::DMatrix::<f64>::identity(n, n);
        let row_major: Vec<f64> = (0..n * n).map(|k| a[(k / n, k % n)]).collect();
        let chol = Cholesky::factor(&row_major, n).unwrap();
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let mut x = rhs.clone();
        chol.solve_in_place(&mut x);
        let ax = &a * nalgebra::DVector::from_row_slice(&x);
        for i in 0..n {
            assert!((ax[i] - rhs[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = [1.0, 2.0, 2.0, 1.0];
        assert!(Cholesky::factor(&a, 2).is_err());
    }
}
