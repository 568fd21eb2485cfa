//! Zero-order-hold discretization of the diagonal system `h' = a h + b x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Formula for the discrete input coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// `b_bar = (Δa)⁻¹ (e^{Δa} − 1) Δb`, the exact held-input solution.
    #[default]
    Standard,
    /// `b_bar = e^{−Δa} (e^{Δa} − 1) Δb`.
    Literal,
}

/// `(a_bar, b_bar)` for a single channel.
pub fn zoh_discretize(delta: f64, a: f64, b: f64, rule: Discretization) -> Result<(f64, f64)> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid("delta", format!("must be positive and finite, got {delta}")));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite("zoh_discretize"));
    }
    let (ab, k) = coefficients(delta, a, rule);
    Ok((ab, k * b))
}

/// `(e^z, e^z − 1)` with one transcendental call: `expm1` near zero,
/// `exp` elsewhere.
#[inline]
fn exp_pair(z: f64) -> (f64, f64) {
    if z.abs() < 0.5 {
        let m = z.exp_m1();
        (1.0 + m, m)
    } else {
        let e = z.exp();
        (e, e - 1.0)
    }
}

/// `ā = e^{Δa}` and the coefficient `k` with `b̄ = k·b`.
#[inline]
pub(crate) fn coefficients(delta: f64, a: f64, rule: Discretization) -> (f64, f64) {
    let z = delta * a;
    let (e, m) = exp_pair(z);
    let k = match rule {
        // k = Δ·φ(z) with φ(z) = (e^z − 1)/z
        Discretization::Standard => delta * if z == 0.0 { 1.0 } else { m / z },
        // k = Δ·(1 − e^{−z})
        Discretization::Literal => m * (1.0 / e) * delta,
    };
    (e, k)
}

/// [`coefficients`] with their partials in `Δ` and `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Terms {
    pub ab: f64,
    pub ab_d: f64,
    pub ab_a: f64,
    pub k: f64,
    pub k_d: f64,
    pub k_a: f64,
}

#[inline]
pub(crate) fn terms(delta: f64, a: f64, rule: Discretization) -> Terms {
    let z = delta * a;
    let (e, m) = exp_pair(z);
    let (k, k_d, k_a) = match rule {
        Discretization::Standard => {
            let phi = if z == 0.0 { 1.0 } else { m / z };
            (delta * phi, e, delta * delta * phi1_prime(z, e, m))
        }
        Discretization::Literal => {
            let em = 1.0 / e;
            let kk = m * em;
            (kk * delta, kk + z * em, delta * delta * em)
        }
    };
    Terms { ab: e, ab_d: a * e, ab_a: delta * e, k, k_d, k_a }
}

/// `φ'(z) = (z e^z − e^z + 1)/z²`, by series near zero where the closed form
/// cancels.
fn phi1_prime(z: f64, e: f64, em1: f64) -> f64 {
    if z.abs() < 0.1 {
        // Σ_{k≥1} k z^{k−1}/(k+1)!
        let mut sum = 0.0;
        let mut zp = 1.0;
        let mut fact = 2.0;
        for k in 1..16 {
            sum += k as f64 * zp / fact;
            zp *= z;
            fact *= (k + 2) as f64;
        }
        sum
    } else {
        (z * e - em1) / (z * z)
    }
}
