//! Bijection between `m` mass fractions summing to one and `m − 1`
//! encoded values in `[0, 1]`.
//!
//! With `d_k = 1 − Σ_{j≠k, j<m−1} y_j`, the forward map is `z_k = y_k / d_k`
//! for `k < m − 2` and `z_{m−2} = y_{m−2}` (zero-based). Since
//! `d_k = y_k + y_{m−1}`, the denominators solve the linear system
//! `d_k + Σ_{j≠k} z_j d_j = 1 − z_{m−2}`, which gives the inverse.

use crate::error::{Error, Result};
use crate::linalg;

/// Smallest denominator accepted by [`forward_map`].
pub const FACE_DELTA: f64 = 1e-12;
/// Most negative reconstructed last fraction accepted by [`inverse_map`].
pub const LAST_TOLERANCE: f64 = 1e-9;
const SUM_TOLERANCE: f64 = 1e-8;

pub fn forward_map(y: &[f64]) -> Result<Vec<f64>> {
    let m = y.len();
    if m < 2 {
        return Err(Error::invalid("mass fractions", "need at least two species"));
    }
    if y.iter().any(|v| !(*v >= 0.0) || *v > 1.0 + SUM_TOLERANCE) {
        return Err(Error::invalid("mass fractions", "entries must lie in [0, 1]"));
    }
    let total: f64 = y.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::invalid("mass fractions", format!("sum to {total}, not 1")));
    }
    let head: f64 = y[..m - 1].iter().sum();
    let mut z = Vec::with_capacity(m - 1);
    for k in 0..m - 2 {
        let d = 1.0 - (head - y[k]);
        if d < FACE_DELTA {
            return Err(Error::DegenerateFace { index: k, value: d, delta: FACE_DELTA });
        }
        z.push(y[k] / d);
    }
    z.push(y[m - 2]);
    Ok(z)
}

pub fn inverse_map(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::invalid("encoding", "need at least one component"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inverse_map"));
    }
    let m = z.len() + 1;
    let n = m - 2;
    let last_known = z[m - 2];
    let mut a = vec![0.0; n * n];
    for k in 0..n {
        for j in 0..n {
            a[k * n + j] = if j == k { 1.0 } else { z[j] };
        }
    }
    let d = linalg::solve(a, n, &vec![1.0 - last_known; n])?;
    let mut y: Vec<f64> = (0..n).map(|k| z[k] * d[k]).collect();
    y.push(last_known);
    let head: f64 = y.iter().sum();
    let last = 1.0 - head;
    if last < -LAST_TOLERANCE {
        return Err(Error::InvalidEncoding { value: last });
    }
    y.push(last);
    Ok(y)
}

/// The denominators `d` of an encoding, obtained from the linear solve.
pub fn denominators(z: &[f64]) -> Result<Vec<f64>> {
    let y = inverse_map(z)?;
    let m = y.len();
    Ok((0..m - 2).map(|k| y[k] + y[m - 1]).collect())
}
