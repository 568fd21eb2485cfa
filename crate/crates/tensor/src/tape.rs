use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::kernels;
use crate::tensor::{axis_split, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

/// Gradient rule for an operation defined outside this crate.
///
/// `backward` receives the input values, the recorded output value and the
/// incoming gradient (same shape as the output) and returns one optional
/// gradient per input, shaped like that input.
pub trait Backward {
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>>;
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Reciprocal(Var),
    Softplus(Var),
    Sigmoid(Var),
    Silu(Var),
    MatMul(Var, Var),
    CausalConv(Var, Var),
    LayerNorm { x: Var, rstd: Vec<f64> },
    RmsNorm { x: Var, rstd: Vec<f64> },
    Sum(Var),
    Mean(Var),
    Slice { x: Var, axis: usize, start: usize },
    Concat { parts: Vec<Var>, axis: usize },
    Reshape(Var),
    Custom { inputs: Vec<Var>, rule: Box<dyn Backward> },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of executed operations.
///
/// Every operation appends its result after its inputs, so reverse
/// insertion order is a valid reverse topological order for backward.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Gradients are only tracked downstream of
    /// leaves created with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Value recorded for `v`.
    ///
    /// # Panics
    /// If `v` was created on another tape.
    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable from a different tape");
        &self.nodes[v.index].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn check(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(&self.nodes[v.index])
    }

    fn push(&mut self, name: &'static str, value: Tensor, inputs: &[Var], op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        // constants downstream of constants keep no backward state
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node { value, requires_grad, op });
        Ok(Var { tape: self.id, index: self.nodes.len() - 1 })
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (va, vb) = (&self.check(a)?.value, &self.check(b)?.value);
        let shape = broadcast_shape(name, va.shape(), vb.shape())?;
        let (da, db) = (va.data(), vb.data());
        let (la, lb) = (da.len(), db.len());
        let n: usize = shape.iter().product();
        let data = (0..n).map(|k| f(da[k % la], db[k % lb])).collect();
        let value = Tensor::new(shape, data)?;
        self.push(name, value, &[a, b], op)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let va = &self.check(a)?.value;
        let data = va.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        self.push(name, value, &[a], op)
    }

    /// Elementwise sum; the lower-rank operand broadcasts over the leading
    /// axes of the other when its shape is a suffix of the other's.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary("neg", a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.unary("scale", a, |x| k * x, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + k, Op::Offset(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn reciprocal(&mut self, a: Var) -> Result<Var> {
        self.unary("reciprocal", a, |x| 1.0 / x, Op::Reciprocal(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, kernels::softplus, Op::Softplus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, kernels::sigmoid, Op::Sigmoid(a))
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        self.unary("silu", a, |x| x * kernels::sigmoid(x), Op::Silu(a))
    }

    /// `a[.., k] · b[k, n] -> [.., n]`; leading axes of `a` act as rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.check(a)?.value, &self.check(b)?.value);
        let (m, k, n) = matmul_dims(va.shape(), vb.shape())?;
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, va.data(), vb.data(), &mut out, false);
        let mut shape = va.shape().to_vec();
        *shape.last_mut().expect("rank checked") = n;
        let value = Tensor::new(shape, out)?;
        self.push("matmul", value, &[a, b], Op::MatMul(a, b))
    }

    /// Depthwise causal convolution along time: `x[b][t][c]`, `w[c][k]`.
    /// Zero left padding keeps the output length equal to the input's and
    /// step `t` only sees steps `t-k+1..=t`.
    pub fn causal_conv1d(&mut self, x: Var, w: Var) -> Result<Var> {
        let (vx, vw) = (&self.check(x)?.value, &self.check(w)?.value);
        let (batch, time, chans, width) = conv_dims(vx.shape(), vw.shape())?;
        let out = kernels::causal_conv(vx.data(), vw.data(), batch, time, chans, width);
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        self.push("causal_conv1d", value, &[x, w], Op::CausalConv(x, w))
    }

    /// Normalizes the last axis to zero mean and unit variance.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let vx = &self.check(x)?.value;
        let d = last_dim("layer_norm", vx.shape())?;
        let rows = vx.len() / d;
        let mut out = vec![0.0; vx.len()];
        let mut rstd = vec![0.0; rows];
        for (r, row) in vx.data().chunks_exact(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + eps).sqrt();
            rstd[r] = s;
            for (o, v) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
        }
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        self.push("layer_norm", value, &[x], Op::LayerNorm { x, rstd })
    }

    /// Scales the last axis to unit root-mean-square.
    pub fn rms_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let vx = &self.check(x)?.value;
        let d = last_dim("rms_norm", vx.shape())?;
        let rows = vx.len() / d;
        let mut out = vec![0.0; vx.len()];
        let mut rstd = vec![0.0; rows];
        for (r, row) in vx.data().chunks_exact(d).enumerate() {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
            let s = 1.0 / (ms + eps).sqrt();
            rstd[r] = s;
            for (o, v) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = v * s;
            }
        }
        let value = Tensor::new(vx.shape().to_vec(), out)?;
        self.push("rms_norm", value, &[x], Op::RmsNorm { x, rstd })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.check(a)?.value.data().iter().sum();
        self.push("sum", Tensor::scalar(s), &[a], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let va = &self.check(a)?.value;
        if va.is_empty() {
            return Err(TensorError::InvalidArgument { op: "mean", reason: "empty tensor".into() });
        }
        let s = va.data().iter().sum::<f64>() / va.len() as f64;
        self.push("mean", Tensor::scalar(s), &[a], Op::Mean(a))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let vx = &self.check(x)?.value;
        if axis >= vx.rank() || start + len > vx.shape()[axis] {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                reason: format!("range {start}..{} on axis {axis} of {:?}", start + len, vx.shape()),
            });
        }
        let (outer, extent, inner) = axis_split(vx.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            out.extend_from_slice(&vx.data()[base..base + len * inner]);
        }
        let mut shape = vx.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::new(shape, out)?;
        self.push("slice", value, &[x], Op::Slice { x, axis, start })
    }

    /// Joins tensors along `axis`; every other extent must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts.first().ok_or(TensorError::InvalidArgument { op: "concat", reason: "no inputs".into() })?;
        let base_shape = self.check(*first)?.value.shape().to_vec();
        if axis >= base_shape.len() {
            return Err(TensorError::InvalidArgument {
                op: "concat",
                reason: format!("axis {axis} out of range for {base_shape:?}"),
            });
        }
        let mut total = 0;
        for p in parts {
            let s = self.check(*p)?.value.shape();
            let compatible = s.len() == base_shape.len()
                && s.iter().zip(&base_shape).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::ShapeMismatch { op: "concat", lhs: base_shape, rhs: s.to_vec() });
            }
            total += s[axis];
        }
        let mut shape = base_shape;
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let v = &self.nodes[p.index].value;
                let len = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * len..(o + 1) * len]);
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push("concat", value, parts, Op::Concat { parts: parts.to_vec(), axis })
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.check(x)?.value.clone().reshape(shape)?;
        self.push("reshape", value, &[x], Op::Reshape(x))
    }

    /// Records an operation computed outside the tape together with its
    /// gradient rule.
    pub fn custom(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        value: Tensor,
        rule: Box<dyn Backward>,
    ) -> Result<Var> {
        for v in inputs {
            self.check(*v)?;
        }
        self.push(name, value, inputs, Op::Custom { inputs: inputs.to_vec(), rule })
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// Variables that do not influence `output` get zero gradients.
    pub fn backward(&self, output: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let out = self.check(output)?;
        if out.value.len() != 1 {
            return Err(TensorError::NotScalar { shape: out.value.shape().to_vec() });
        }
        if !out.requires_grad {
            return Err(TensorError::NotRecorded);
        }
        for v in wrt {
            if !self.check(*v)?.requires_grad {
                return Err(TensorError::NotRecorded);
            }
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.index + 1];
        grads[output.index] = Some(vec![1.0]);
        for i in (0..=output.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads)?;
        }

        Ok(wrt
            .iter()
            .map(|v| {
                let shape = self.nodes[v.index].value.shape().to_vec();
                match grads.get(v.index).and_then(|g| g.clone()) {
                    Some(g) => Tensor::new(shape, g).expect("gradient matches value shape"),
                    None => Tensor::zeros(shape),
                }
            })
            .collect())
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.index].value
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
        if !self.nodes[v.index].requires_grad {
            return;
        }
        match &mut grads[v.index] {
            Some(g) => g.iter_mut().zip(&contribution).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Folds a full-size gradient onto an operand that may have been
    /// broadcast over leading axes.
    fn reduce_to(&self, v: Var, full: Vec<f64>) -> Vec<f64> {
        let n = self.val(v).len();
        if full.len() == n {
            return full;
        }
        let mut out = vec![0.0; n];
        for (k, g) in full.iter().enumerate() {
            out[k % n] += g;
        }
        out
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let ga = self.reduce_to(*a, g.to_vec());
                let gb = self.reduce_to(*b, g.to_vec());
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Sub(a, b) => {
                let ga = self.reduce_to(*a, g.to_vec());
                let gb = self.reduce_to(*b, g.iter().map(|v| -v).collect());
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.val(*a).data(), self.val(*b).data());
                let (la, lb) = (da.len(), db.len());
                if self.nodes[a.index].requires_grad {
                    let full = g.iter().enumerate().map(|(k, gk)| gk * db[k % lb]).collect();
                    let ga = self.reduce_to(*a, full);
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.index].requires_grad {
                    let full = g.iter().enumerate().map(|(k, gk)| gk * da[k % la]).collect();
                    let gb = self.reduce_to(*b, full);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Neg(a) => self.accumulate(grads, *a, g.iter().map(|v| -v).collect()),
            Op::Scale(a, k) => self.accumulate(grads, *a, g.iter().map(|v| k * v).collect()),
            Op::Offset(a) | Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::Exp(a) => self.accumulate(grads, *a, g.iter().zip(y).map(|(g, y)| g * y).collect()),
            Op::Reciprocal(a) => self.accumulate(grads, *a, g.iter().zip(y).map(|(g, y)| -g * y * y).collect()),
            Op::Softplus(a) => {
                let x = self.val(*a).data();
                let ga = g.iter().zip(x).map(|(g, x)| g * kernels::sigmoid(*x)).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => self.accumulate(grads, *a, g.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect()),
            Op::Silu(a) => {
                let x = self.val(*a).data();
                let ga = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| {
                        let s = kernels::sigmoid(x);
                        g * (s + x * s * (1.0 - s))
                    })
                    .collect();
                self.accumulate(grads, *a, ga);
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.val(*a), self.val(*b));
                let (m, k, n) = matmul_dims(va.shape(), vb.shape())?;
                if self.nodes[a.index].requires_grad {
                    let mut ga = vec![0.0; m * k];
                    kernels::gemm_nt(m, n, k, g, vb.data(), &mut ga, false);
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.index].requires_grad {
                    let mut gb = vec![0.0; k * n];
                    kernels::gemm_tn(m, k, n, va.data(), g, &mut gb, false);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::CausalConv(x, w) => {
                let (vx, vw) = (self.val(*x), self.val(*w));
                let (batch, time, chans, width) = conv_dims(vx.shape(), vw.shape())?;
                let (dx, dw) = (vx.data(), vw.data());
                let mut gx = vec![0.0; dx.len()];
                let mut gw = vec![0.0; dw.len()];
                for b in 0..batch {
                    let base = b * time * chans;
                    for t in 0..time {
                        let go = &g[base + t * chans..base + (t + 1) * chans];
                        for k in 0..width {
                            let lag = width - 1 - k;
                            if lag > t {
                                continue;
                            }
                            let src = base + (t - lag) * chans;
                            for c in 0..chans {
                                gx[src + c] += go[c] * dw[c * width + k];
                                gw[c * width + k] += go[c] * dx[src + c];
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *w, gw);
            }
            Op::LayerNorm { x, rstd } => {
                let d = *node.value.shape().last().expect("rank >= 1");
                let mut gx = vec![0.0; g.len()];
                for (r, s) in rstd.iter().enumerate() {
                    let (gr, yr) = (&g[r * d..(r + 1) * d], &y[r * d..(r + 1) * d]);
                    let mean_g = gr.iter().sum::<f64>() / d as f64;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for i in 0..d {
                        gx[r * d + i] = s * (gr[i] - mean_g - yr[i] * mean_gy);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::RmsNorm { x, rstd } => {
                let d = *node.value.shape().last().expect("rank >= 1");
                let mut gx = vec![0.0; g.len()];
                for (r, s) in rstd.iter().enumerate() {
                    let (gr, yr) = (&g[r * d..(r + 1) * d], &y[r * d..(r + 1) * d]);
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for i in 0..d {
                        gx[r * d + i] = s * (gr[i] - yr[i] * mean_gy);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Sum(a) => {
                let n = self.val(*a).len();
                self.accumulate(grads, *a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.val(*a).len();
                self.accumulate(grads, *a, vec![g[0] / n as f64; n]);
            }
            Op::Slice { x, axis, start } => {
                let vx = self.val(*x);
                let (outer, extent, inner) = axis_split(vx.shape(), *axis);
                let len = node.value.shape()[*axis];
                let mut gx = vec![0.0; vx.len()];
                for o in 0..outer {
                    let dst = o * extent * inner + start * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Concat { parts, axis } => {
                let (outer, _, inner) = axis_split(node.value.shape(), *axis);
                let mut parts_g: Vec<Vec<f64>> = parts.iter().map(|p| Vec::with_capacity(self.val(*p).len())).collect();
                let mut offset = 0;
                for _ in 0..outer {
                    for (p, pg) in parts.iter().zip(parts_g.iter_mut()) {
                        let len = self.val(*p).shape()[*axis] * inner;
                        pg.extend_from_slice(&g[offset..offset + len]);
                        offset += len;
                    }
                }
                for (p, pg) in parts.iter().zip(parts_g) {
                    self.accumulate(grads, *p, pg);
                }
            }
            Op::Custom { inputs, rule } => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.val(*v)).collect();
                let grad = Tensor::new(node.value.shape().to_vec(), g.to_vec())?;
                let out = rule.backward(&values, &node.value, &grad)?;
                for (v, gv) in inputs.iter().zip(out) {
                    if let Some(gv) = gv {
                        if gv.shape() != self.val(*v).shape() {
                            return Err(TensorError::ShapeMismatch {
                                op: "custom backward",
                                lhs: self.val(*v).shape().to_vec(),
                                rhs: gv.shape().to_vec(),
                            });
                        }
                        self.accumulate(grads, *v, gv.into_data());
                    }
                }
            }
        }
        Ok(())
    }
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a == b {
        return Ok(a.to_vec());
    }
    if a.len() > b.len() && a.ends_with(b) {
        return Ok(a.to_vec());
    }
    if b.len() > a.len() && b.ends_with(a) {
        return Ok(b.to_vec());
    }
    Err(TensorError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() })
}

fn matmul_dims(a: &[usize], b: &[usize]) -> Result<(usize, usize, usize)> {
    let mismatch = || TensorError::ShapeMismatch { op: "matmul", lhs: a.to_vec(), rhs: b.to_vec() };
    if a.is_empty() || b.len() != 2 || a[a.len() - 1] != b[0] {
        return Err(mismatch());
    }
    let m = a[..a.len() - 1].iter().product();
    Ok((m, b[0], b[1]))
}

fn conv_dims(x: &[usize], w: &[usize]) -> Result<(usize, usize, usize, usize)> {
    if x.len() != 3 || w.len() != 2 || w[0] != x[2] || w[1] == 0 {
        return Err(TensorError::ShapeMismatch { op: "causal_conv1d", lhs: x.to_vec(), rhs: w.to_vec() });
    }
    Ok((x[0], x[1], x[2], w[1]))
}

fn last_dim(op: &'static str, shape: &[usize]) -> Result<usize> {
    match shape.last() {
        Some(&d) if d > 0 => Ok(d),
        _ => Err(TensorError::InvalidArgument { op, reason: format!("needs a non-empty last axis, got {shape:?}") }),
    }
}
