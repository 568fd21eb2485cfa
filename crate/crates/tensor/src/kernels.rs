//! Raw numeric kernels shared by the forward and backward passes.

/// `c[m×n] (+)= a[m×k] · b[k×n]`, all row-major. `accumulate` keeps the
/// existing contents of `c`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are checked above and strides describe dense
    // row-major layouts of exactly those lengths.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m×k] (+)= g[m×n] · bᵀ` where `b` is `k×n` row-major.
pub(crate) fn gemm_nt(m: usize, n: usize, k: usize, g: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * k);
    if m == 0 || k == 0 {
        return;
    }
    if n == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: bᵀ is read through swapped strides of the dense k×n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            n,
            k,
            1.0,
            g.as_ptr(),
            n as isize,
            1,
            b.as_ptr(),
            1,
            n as isize,
            beta,
            c.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// `c[k×n] (+)= aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
pub(crate) fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], g: &[f64], c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    if k == 0 || n == 0 {
        return;
    }
    if m == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: aᵀ is read through swapped strides of the dense m×k buffer.
    unsafe {
        matrixmultiply::dgemm(
            k,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            g.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Depthwise causal convolution over the time axis of `x[b][t][c]` with
/// kernel `w[c][k]`; the last tap multiplies the current step.
pub(crate) fn causal_conv(x: &[f64], w: &[f64], batch: usize, time: usize, chans: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * time * chans];
    for b in 0..batch {
        let base = b * time * chans;
        for t in 0..time {
            let o = &mut out[base + t * chans..base + (t + 1) * chans];
            for k in 0..width {
                let lag = width - 1 - k;
                if lag > t {
                    continue;
                }
                let src = &x[base + (t - lag) * chans..base + (t - lag + 1) * chans];
                for c in 0..chans {
                    o[c] += w[c * width + k] * src[c];
                }
            }
        }
    }
    out
}
