//! The selective SSM mixer block.

use rand::Rng;
use stiffssm_tensor::{Tape, Tensor, Var};

use super::params::ParamSet;
use super::scan::{record_selective_scan, ScanMode};
use super::zoh::Discretization;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockDims {
    pub d_model: usize,
    pub d_inner: usize,
    pub state: usize,
    pub conv: usize,
    pub dt_rank: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Uniform(f64),
    Const(f64),
    /// `ln(s + 1)` along the last axis, so `A = −(1, 2, …, state)`.
    ALog,
    /// Inverse softplus of a step drawn log-uniformly from `[min, max]`.
    DtBias {
        min: f64,
        max: f64,
    },
}

impl Init {
    pub(crate) fn sample(self, shape: &[usize], rng: &mut impl Rng) -> Tensor {
        match self {
            Init::Uniform(bound) => Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-bound..=bound)),
            Init::Const(v) => Tensor::full(shape.to_vec(), v),
            Init::ALog => {
                let last = *shape.last().unwrap_or(&1);
                Tensor::from_fn(shape.to_vec(), |i| ((i % last) as f64 + 1.0).ln())
            }
            Init::DtBias { min, max } => Tensor::from_fn(shape.to_vec(), |_| {
                let dt = rng.gen_range(min.ln()..=max.ln()).exp().max(1e-4);
                dt + (-(-dt).exp_m1()).ln()
            }),
        }
    }
}

pub(crate) fn block_specs(prefix: &str, d: BlockDims, dt_min: f64, dt_max: f64) -> Vec<(String, Vec<usize>, Init)> {
    let lin = |fan_in: usize| Init::Uniform(1.0 / (fan_in as f64).sqrt());
    let n = |s: &str| format!("{prefix}{s}");
    vec![
        (n("in_proj.weight"), vec![d.d_model, 2 * d.d_inner], lin(d.d_model)),
        (n("conv.weight"), vec![d.d_inner, d.conv], lin(d.conv)),
        (n("conv.bias"), vec![d.d_inner], lin(d.conv)),
        (n("x_proj.weight"), vec![d.d_inner, d.dt_rank + 2 * d.state], lin(d.d_inner)),
        (n("dt_proj.weight"), vec![d.dt_rank, d.d_inner], lin(d.dt_rank)),
        (n("dt_proj.bias"), vec![d.d_inner], Init::DtBias { min: dt_min, max: dt_max }),
        (n("A_log"), vec![d.d_inner, d.state], Init::ALog),
        (n("D"), vec![d.d_inner], Init::Const(1.0)),
        (n("out_proj.weight"), vec![d.d_inner, d.d_model], lin(d.d_inner)),
    ]
}

/// Tape handles for one block's parameters.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub in_proj: Var,
    pub conv_w: Var,
    pub conv_b: Var,
    pub x_proj: Var,
    pub dt_w: Var,
    pub dt_b: Var,
    pub a_log: Var,
    pub d: Var,
    pub out_proj: Var,
}

impl BlockVars {
    pub fn lookup(params: &ParamSet, vars: &[Var], prefix: &str) -> Result<Self> {
        let get = |s: &str| {
            params
                .position(&format!("{prefix}{s}"))
                .map(|i| vars[i])
                .ok_or_else(|| Error::invalid("parameters", format!("missing `{prefix}{s}`")))
        };
        Ok(BlockVars {
            in_proj: get("in_proj.weight")?,
            conv_w: get("conv.weight")?,
            conv_b: get("conv.bias")?,
            x_proj: get("x_proj.weight")?,
            dt_w: get("dt_proj.weight")?,
            dt_b: get("dt_proj.bias")?,
            a_log: get("A_log")?,
            d: get("D")?,
            out_proj: get("out_proj.weight")?,
        })
    }
}

/// In-project, split into stream and gate; stream → causal conv → SiLU →
/// selective scan (plus skip); gate → SiLU; multiply; out-project.
pub fn mamba_block_forward(
    tape: &mut Tape,
    p: &BlockVars,
    dims: BlockDims,
    rule: Discretization,
    mode: ScanMode,
    x: Var,
) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[2] != dims.d_model {
        return Err(Error::shape(
            "mamba_block_forward",
            format!("input {shape:?} does not end in width {}", dims.d_model),
        ));
    }
    let e = dims.d_inner;
    let xz = tape.matmul(x, p.in_proj)?;
    let stream = tape.slice(xz, 2, 0, e)?;
    let gate = tape.slice(xz, 2, e, e)?;

    let conv = tape.causal_conv1d(stream, p.conv_w)?;
    let conv = tape.add(conv, p.conv_b)?;
    let u = tape.silu(conv)?;

    let proj = tape.matmul(u, p.x_proj)?;
    let dt = tape.slice(proj, 2, 0, dims.dt_rank)?;
    let b = tape.slice(proj, 2, dims.dt_rank, dims.state)?;
    let c = tape.slice(proj, 2, dims.dt_rank + dims.state, dims.state)?;
    let dt = tape.matmul(dt, p.dt_w)?;
    let dt = tape.add(dt, p.dt_b)?;
    let delta = tape.softplus(dt)?;
    let a = tape.exp(p.a_log)?;
    let a = tape.neg(a)?;

    let y = record_selective_scan(tape, u, delta, a, b, c, rule, mode)?;
    let skip = tape.mul(u, p.d)?;
    let y = tape.add(y, skip)?;
    let g = tape.silu(gate)?;
    let y = tape.mul(y, g)?;
    Ok(tape.matmul(y, p.out_proj)?)
}
