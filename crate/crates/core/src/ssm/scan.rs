//! Selective scan: the input-dependent diagonal recurrence
//! `h_t = ā_t h_{t−1} + b̄_t x_t`, `y_t = C_t · h_t`, with `h_0 = 0`.
//!
//! Shapes: `x`, `delta` are `[batch][time][chans]`, `a` is `[chans][state]`,
//! `b`, `c` are `[batch][time][state]`. Each `(batch, chan, state)` triple is
//! an independent lane.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stiffssm_tensor::{Backward, Tape, Tensor, Var};

use super::zoh::{coefficients, terms, Discretization, Terms};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    /// Left-to-right loop over time.
    #[default]
    Sequential,
    /// Tree scan over the associative composition of affine maps, lanes in
    /// parallel.
    Parallel,
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    batch: usize,
    time: usize,
    chans: usize,
    state: usize,
}

fn dims(x: &Tensor, delta: &Tensor, a: &Tensor, b: &Tensor, c: &Tensor) -> Result<Dims> {
    let bad = |what: &str| Error::shape("selective_scan", what.to_string());
    let &[batch, time, chans] = x.shape() else {
        return Err(bad("x must be [batch][time][chans]"));
    };
    let &[ac, state] = a.shape() else {
        return Err(bad("a must be [chans][state]"));
    };
    if delta.shape() != x.shape() {
        return Err(bad("delta must match x"));
    }
    if ac != chans {
        return Err(bad("a has the wrong channel count"));
    }
    if b.shape() != [batch, time, state] || c.shape() != [batch, time, state] {
        return Err(bad("b and c must be [batch][time][state]"));
    }
    Ok(Dims { batch, time, chans, state })
}

/// Prefix states `h_t` of `h ↦ a_t h + u_t` from `h = 0`.
pub fn affine_scan(a: &[f64], u: &[f64], mode: ScanMode) -> Vec<f64> {
    assert_eq!(a.len(), u.len());
    match mode {
        ScanMode::Sequential => {
            let mut h = 0.0;
            a.iter()
                .zip(u)
                .map(|(&at, &ut)| {
                    h = at * h + ut;
                    h
                })
                .collect()
        }
        ScanMode::Parallel => {
            let elems: Vec<(f64, f64)> = a.iter().copied().zip(u.iter().copied()).collect();
            tree_scan(&elems).into_iter().map(|(_, b)| b).collect()
        }
    }
}

/// Composition: apply `first`, then `second`.
#[inline]
fn compose(first: (f64, f64), second: (f64, f64)) -> (f64, f64) {
    (second.0 * first.0, second.0 * first.1 + second.1)
}

/// Inclusive prefix compositions by pairwise reduction: combine neighbours,
/// scan the half-length sequence, then fill in the even positions.
fn tree_scan(e: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = e.len();
    if n <= 1 {
        return e.to_vec();
    }
    let pairs: Vec<(f64, f64)> = (0..n / 2).map(|i| compose(e[2 * i], e[2 * i + 1])).collect();
    let odd = tree_scan(&pairs);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(if i == 0 {
            e[0]
        } else if i % 2 == 1 {
            odd[i / 2]
        } else {
            compose(odd[i / 2 - 1], e[i])
        });
    }
    out
}

struct Forward {
    y: Vec<f64>,
    /// `[batch][time][chans][state]`, empty unless requested.
    states: Vec<f64>,
}

fn forward(d: Dims, inputs: [&[f64]; 5], rule: Discretization, mode: ScanMode, keep_states: bool) -> Forward {
    let [x, delta, a, b, c] = inputs;
    let Dims { batch, time, chans, state } = d;
    let es = chans * state;
    let mut y = vec![0.0; batch * time * chans];
    let mut states = if keep_states { vec![0.0; batch * time * es] } else { Vec::new() };
    match mode {
        ScanMode::Sequential => {
            let mut h = vec![0.0; es];
            for bi in 0..batch {
                h.fill(0.0);
                for t in 0..time {
                    let row = (bi * time + t) * chans;
                    let brow = &b[(bi * time + t) * state..][..state];
                    let crow = &c[(bi * time + t) * state..][..state];
                    for e in 0..chans {
                        let (dl, xv) = (delta[row + e], x[row + e]);
                        let mut acc = 0.0;
                        for s in 0..state {
                            let av = a[e * state + s];
                            let hv = &mut h[e * state + s];
                            let (ab, k) = coefficients(dl, av, rule);
                            *hv = ab * *hv + k * brow[s] * xv;
                            acc += crow[s] * *hv;
                        }
                        y[row + e] = acc;
                    }
                    if keep_states {
                        states[(bi * time + t) * es..][..es].copy_from_slice(&h);
                    }
                }
            }
        }
        ScanMode::Parallel => {
            // lane-major buffers so each lane's time series is contiguous
            let lanes = batch * es;
            let mut hl = vec![0.0; lanes * time];
            hl.par_chunks_mut(time.max(1)).enumerate().for_each(|(lane, out)| {
                let (bi, e, s) = (lane / es, (lane % es) / state, lane % state);
                let av = a[e * state + s];
                let mut aa = Vec::with_capacity(time);
                let mut uu = Vec::with_capacity(time);
                for t in 0..time {
                    let idx = (bi * time + t) * chans + e;
                    let dl = delta[idx];
                    let (ab, k) = coefficients(dl, av, rule);
                    aa.push(ab);
                    uu.push(k * b[(bi * time + t) * state + s] * x[idx]);
                }
                out.copy_from_slice(&affine_scan(&aa, &uu, ScanMode::Parallel));
            });
            for bi in 0..batch {
                for t in 0..time {
                    let crow = &c[(bi * time + t) * state..][..state];
                    for e in 0..chans {
                        let mut acc = 0.0;
                        for s in 0..state {
                            let hv = hl[((bi * es) + e * state + s) * time + t];
                            acc += crow[s] * hv;
                            if keep_states {
                                states[((bi * time + t) * chans + e) * state + s] = hv;
                            }
                        }
                        y[(bi * time + t) * chans + e] = acc;
                    }
                }
            }
        }
    }
    Forward { y, states }
}

/// Evaluates the scan without recording anything.
pub fn selective_scan(
    x: &Tensor,
    delta: &Tensor,
    a: &Tensor,
    b: &Tensor,
    c: &Tensor,
    rule: Discretization,
    mode: ScanMode,
) -> Result<Tensor> {
    let d = dims(x, delta, a, b, c)?;
    let f = forward(d, [x.data(), delta.data(), a.data(), b.data(), c.data()], rule, mode, false);
    let y = Tensor::new(x.shape().to_vec(), f.y)?;
    if !y.is_finite() {
        return Err(Error::NonFinite("selective_scan"));
    }
    Ok(y)
}

/// Records the scan on `tape` with a fused backward rule.
#[allow(clippy::too_many_arguments)]
pub fn record_selective_scan(
    tape: &mut Tape,
    x: Var,
    delta: Var,
    a: Var,
    b: Var,
    c: Var,
    rule: Discretization,
    mode: ScanMode,
) -> Result<Var> {
    let vars = [x, delta, a, b, c];
    let d = {
        let v: Vec<&Tensor> = vars.iter().map(|&v| tape.value(v)).collect();
        dims(v[0], v[1], v[2], v[3], v[4])?
    };
    let keep = vars.iter().any(|&v| tape.requires_grad(v));
    let f = {
        let data = vars.map(|v| tape.value(v).data());
        forward(d, data, rule, mode, keep)
    };
    let y = Tensor::new(tape.value(x).shape().to_vec(), f.y)?;
    Ok(tape.custom("selective_scan", &vars, y, Box::new(ScanBackward { d, rule, states: f.states }))?)
}

struct ScanBackward {
    d: Dims,
    rule: Discretization,
    states: Vec<f64>,
}

impl Backward for ScanBackward {
    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad: &Tensor,
    ) -> stiffssm_tensor::Result<Vec<Option<Tensor>>> {
        let Dims { batch, time, chans, state } = self.d;
        let [x, delta, a, b, c] = [0, 1, 2, 3, 4].map(|i| inputs[i].data());
        let gy = grad.data();
        let es = chans * state;
        let mut gx = vec![0.0; x.len()];
        let mut gd = vec![0.0; delta.len()];
        let mut ga = vec![0.0; a.len()];
        let mut gb = vec![0.0; b.len()];
        let mut gc = vec![0.0; c.len()];
        // carry[e][s] = ā_{t+1} · ∂L/∂h_{t+1}
        let mut carry = vec![0.0; es];
        for bi in 0..batch {
            carry.fill(0.0);
            for t in (0..time).rev() {
                let row = (bi * time + t) * chans;
                let srow = (bi * time + t) * state;
                let hrow = &self.states[(bi * time + t) * es..][..es];
                let hprev = (t > 0).then(|| &self.states[(bi * time + t - 1) * es..][..es]);
                for e in 0..chans {
                    let (gyv, dl, xv) = (gy[row + e], delta[row + e], x[row + e]);
                    let (mut acc_x, mut acc_d) = (0.0, 0.0);
                    for s in 0..state {
                        let es_i = e * state + s;
                        let (av, bv, cv) = (a[es_i], b[srow + s], c[srow + s]);
                        let ht = hrow[es_i];
                        let hp = hprev.map_or(0.0, |h| h[es_i]);
                        gc[srow + s] += gyv * ht;
                        let gh = gyv * cv + carry[es_i];
                        let Terms { ab, ab_d, ab_a, k, k_d, k_a } = terms(dl, av, self.rule);
                        let g_ab = gh * hp;
                        let g_k = gh * xv * bv;
                        acc_x += gh * k * bv;
                        gb[srow + s] += gh * k * xv;
                        acc_d += g_ab * ab_d + g_k * k_d;
                        ga[es_i] += g_ab * ab_a + g_k * k_a;
                        carry[es_i] = ab * gh;
                    }
                    gx[row + e] = acc_x;
                    gd[row + e] = acc_d;
                }
            }
        }
        let shaped = |i: usize, v: Vec<f64>| Tensor::new(inputs[i].shape().to_vec(), v).map(Some);
        Ok(vec![shaped(0, gx)?, shaped(1, gd)?, shaped(2, ga)?, shaped(3, gb)?, shaped(4, gc)?])
    }
}
