//! Thomas elimination for the per-level tridiagonal systems, plus a dense
//! partial-pivoting solver used as an independent oracle.

use crate::error::{Error, Result};

/// Pivots smaller than this in magnitude are treated as singular.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// `sub` holds `A[i+1][i]`, `sup` holds `A[i][i+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>, rhs: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty tridiagonal system".into()));
        }
        for (len, what) in [(sub.len(), n - 1), (sup.len(), n - 1), (rhs.len(), n)] {
            if len != what {
                return Err(Error::LengthMismatch {
                    expected: what,
                    found: len,
                });
            }
        }
        Ok(Self {
            sub,
            diag,
            sup,
            rhs,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Smallest row margin `|a_ii| - sum_{j != i} |a_ij|`; positive means strict dominance.
    pub fn dominance_margin(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.sub[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < n { self.sup[i].abs() } else { 0.0 };
                self.diag[i].abs() - left - right
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// `||A x - b||_inf / ||b||_inf` (absolute residual when `b == 0`).
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        let res = ax
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = self.rhs.iter().map(|b| b.abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            res / scale
        } else {
            res
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = self.diag[i];
            if i + 1 < n {
                a[i + 1][i] = self.sub[i];
                a[i][i + 1] = self.sup[i];
            }
        }
        a
    }
}

/// Forward elimination and back substitution without pivoting.
pub fn thomas_solve(sys: &TridiagonalSystem) -> Result<Vec<f64>> {
    let n = sys.dim();
    if sys.dominance_margin() <= 0.0 {
        log::warn!("tridiagonal system of size {n} is not strictly diagonally dominant");
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = sys.diag[0];
    if !(pivot.abs() >= PIVOT_FLOOR) {
        return Err(Error::SingularSystem { row: 0, pivot });
    }
    if n > 1 {
        c[0] = sys.sup[0] / pivot;
    }
    d[0] = sys.rhs[0] / pivot;
    for i in 1..n {
        let a = sys.sub[i - 1];
        pivot = sys.diag[i] - a * c[i - 1];
        if !(pivot.abs() >= PIVOT_FLOOR) {
            return Err(Error::SingularSystem { row: i, pivot });
        }
        if i + 1 < n {
            c[i] = sys.sup[i] / pivot;
        }
        d[i] = (sys.rhs[i] - a * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Gaussian elimination with partial pivoting on a dense square matrix.
pub fn dense_solve(matrix: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.len();
    if rhs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    if let Some(row) = matrix.iter().find(|row| row.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            found: row.len(),
        });
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut b = rhs.to_vec();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    for col in 0..n {
        let (piv_row, piv_abs) =
            (col..n)
                .map(|r| (r, a[r][col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if !(piv_abs > scale * f64::EPSILON * n as f64) {
            return Err(Error::SingularMatrix { column: col });
        }
        a.swap(col, piv_row);
        b.swap(col, piv_row);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot = &upper[col];
        for (offset, row) in lower.iter_mut().enumerate() {
            let factor = row[col] / pivot[col];
            if factor == 0.0 {
                continue;
            }
            for (v, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                *v -= factor * p;
            }
            b[col + 1 + offset] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - tail) / a[i][i];
    }
    Ok(x)
}
