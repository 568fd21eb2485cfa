//! Small dense LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// Row-major `n×n` LU factors with the row permutation applied.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    /// Factors `a` (row-major, `n×n`). A pivot that is zero or negligible
    /// relative to the largest entry of `a` is reported as singular.
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::shape("lu", format!("{} entries for a {n}x{n} matrix", a.len())));
        }
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * n as f64;
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let (piv, pval) =
                (col..n)
                    .map(|r| (r, a[r * n + col].abs()))
                    .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pval > tiny) || !pval.is_finite() {
                return Err(Error::Singular { column: col, pivot: a[piv * n + col] });
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                perm.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                a[r * n + col] = f;
                if f != 0.0 {
                    for j in col + 1..n {
                        a[r * n + j] -= f * a[col * n + j];
                    }
                }
            }
        }
        Ok(Lu { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`, returning `x`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n, "right-hand side length");
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }
}

/// One-shot `A x = b`.
pub fn solve(a: Vec<f64>, n: usize, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Lu::factor(a, n)?.solve(b))
}
