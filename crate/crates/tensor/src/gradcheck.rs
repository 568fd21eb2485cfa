//! Central finite-difference gradients for verifying backward rules.
//!
//! The numerical path only ever evaluates forward values, so it is
//! independent of every gradient rule it checks.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Scalar function of tensors built on a fresh tape.
pub trait Objective: Fn(&mut Tape, &[Var]) -> Result<Var> {}
impl<F: Fn(&mut Tape, &[Var]) -> Result<Var>> Objective for F {}

pub fn evaluate(f: &impl Objective, inputs: &[Tensor]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.value(out).item()
}

/// Gradients from the tape's backward pass.
pub fn analytic(f: &impl Objective, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out, &vars)
}

/// Central differences `(f(x+h) - f(x-h)) / 2h`, one element at a time.
pub fn numerical(f: &impl Objective, inputs: &[Tensor], h: f64) -> Result<Vec<Tensor>> {
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].shape().to_vec());
        for j in 0..inputs[i].len() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + h;
            let up = evaluate(f, &work)?;
            work[i].data_mut()[j] = x0 - h;
            let down = evaluate(f, &work)?;
            work[i].data_mut()[j] = x0;
            g.data_mut()[j] = (up - down) / (2.0 * h);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Normwise relative error `max|a - n| / max(max|n|, floor)`.
pub fn relative_error(analytic: &Tensor, numeric: &Tensor, floor: f64) -> f64 {
    let diff = analytic.data().iter().zip(numeric.data()).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = numeric.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(floor)
}

/// Worst relative error between backward and central differences over all
/// inputs.
pub fn max_relative_error(f: &impl Objective, inputs: &[Tensor], h: f64) -> Result<f64> {
    let a = analytic(f, inputs)?;
    let n = numerical(f, inputs, h)?;
    Ok(a.iter().zip(&n).map(|(a, n)| relative_error(a, n, 1e-8)).fold(0.0, f64::max))
}
