//! Deep backbone: input projection, residual blocks of (norm, mixer) and
//! (norm, MLP), final norm, output projection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stiffssm_tensor::{Tape, Tensor, Var};

use super::block::{block_specs, mamba_block_forward, BlockDims, BlockVars, Init};
use super::params::ParamSet;
use super::scan::ScanMode;
use super::zoh::Discretization;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Rms,
    Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    /// Hidden width `N`.
    pub d_model: usize,
    pub n_layers: usize,
    pub state_dim: usize,
    /// Inner width is `expand · d_model`.
    pub expand: usize,
    pub conv_width: usize,
    /// Rank of the step-size projection; `ceil(d_model / 16)` when unset.
    pub dt_rank: Option<usize>,
    pub dt_min: f64,
    pub dt_max: f64,
    pub norm: Norm,
    pub norm_eps: f64,
    pub discretization: Discretization,
    pub scan: ScanMode,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            d_model: 32,
            n_layers: 2,
            state_dim: 16,
            expand: 2,
            conv_width: 4,
            dt_rank: None,
            dt_min: 1e-3,
            dt_max: 1e-1,
            norm: Norm::Rms,
            norm_eps: 1e-5,
            discretization: Discretization::Standard,
            scan: ScanMode::Sequential,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("state_dim", self.state_dim),
            ("expand", self.expand),
            ("conv_width", self.conv_width),
            ("dt_rank", self.dt_rank()),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("model.{k}"), "must be at least 1"));
            }
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(Error::invalid("model.dt_min", "need 0 < dt_min <= dt_max"));
        }
        if !(self.norm_eps > 0.0) {
            return Err(Error::invalid("model.norm_eps", "must be positive"));
        }
        Ok(())
    }

    pub fn dt_rank(&self) -> usize {
        self.dt_rank.unwrap_or(self.d_model.div_ceil(16))
    }

    pub fn block_dims(&self) -> BlockDims {
        BlockDims {
            d_model: self.d_model,
            d_inner: self.expand * self.d_model,
            state: self.state_dim,
            conv: self.conv_width,
            dt_rank: self.dt_rank(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub inputs: usize,
    pub outputs: usize,
    pub params: ParamSet,
}

fn specs(cfg: &BackboneConfig, inputs: usize, outputs: usize) -> Vec<(String, Vec<usize>, Init)> {
    let n = cfg.d_model;
    let lin = |fan_in: usize| Init::Uniform(1.0 / (fan_in as f64).sqrt());
    let norm = |name: String, out: &mut Vec<(String, Vec<usize>, Init)>| {
        out.push((format!("{name}.weight"), vec![n], Init::Const(1.0)));
        if cfg.norm == Norm::Layer {
            out.push((format!("{name}.bias"), vec![n], Init::Const(0.0)));
        }
    };
    let mut s = vec![
        ("in_proj.weight".to_string(), vec![inputs, n], lin(inputs)),
        ("in_proj.bias".to_string(), vec![n], lin(inputs)),
    ];
    for l in 0..cfg.n_layers {
        norm(format!("layers.{l}.norm1"), &mut s);
        s.extend(block_specs(&format!("layers.{l}.mixer."), cfg.block_dims(), cfg.dt_min, cfg.dt_max));
        norm(format!("layers.{l}.norm2"), &mut s);
        s.push((format!("layers.{l}.mlp.fc1.weight"), vec![n, 2 * n], lin(n)));
        s.push((format!("layers.{l}.mlp.fc1.bias"), vec![2 * n], lin(n)));
        s.push((format!("layers.{l}.mlp.fc2.weight"), vec![2 * n, n], lin(2 * n)));
        s.push((format!("layers.{l}.mlp.fc2.bias"), vec![n], lin(2 * n)));
    }
    norm("norm_f".to_string(), &mut s);
    s.push(("out_proj.weight".to_string(), vec![n, outputs], lin(n)));
    s.push(("out_proj.bias".to_string(), vec![outputs], lin(n)));
    s
}

impl Backbone {
    /// Fresh parameters drawn from a generator seeded with `seed`.
    pub fn init(config: BackboneConfig, inputs: usize, outputs: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid("model", "input and output widths must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape, init) in specs(&config, inputs, outputs) {
            params.insert(name, init.sample(&shape, &mut rng))?;
        }
        Ok(Backbone { config, inputs, outputs, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: BackboneConfig, inputs: usize, outputs: usize, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let want = specs(&config, inputs, outputs);
        if want.len() != params.len() {
            return Err(Error::invalid(
                "parameters",
                format!("expected {} tensors, found {}", want.len(), params.len()),
            ));
        }
        for (name, shape, _) in &want {
            match params.get(name) {
                Some(t) if t.shape() == shape.as_slice() => {}
                Some(t) => {
                    return Err(Error::invalid(
                        "parameters",
                        format!("`{name}` has shape {:?}, expected {shape:?}", t.shape()),
                    ))
                }
                None => return Err(Error::invalid("parameters", format!("missing `{name}`"))),
            }
        }
        Ok(Backbone { config, inputs, outputs, params })
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        self.params.bind(tape, trainable)
    }

    fn var(&self, vars: &[Var], name: &str) -> Result<Var> {
        self.params
            .position(name)
            .map(|i| vars[i])
            .ok_or_else(|| Error::invalid("parameters", format!("missing `{name}`")))
    }

    fn norm(&self, tape: &mut Tape, vars: &[Var], name: &str, x: Var) -> Result<Var> {
        let eps = self.config.norm_eps;
        let w = self.var(vars, &format!("{name}.weight"))?;
        match self.config.norm {
            Norm::Rms => {
                let y = tape.rms_norm(x, eps)?;
                Ok(tape.mul(y, w)?)
            }
            Norm::Layer => {
                let y = tape.layer_norm(x, eps)?;
                let y = tape.mul(y, w)?;
                let b = self.var(vars, &format!("{name}.bias"))?;
                Ok(tape.add(y, b)?)
            }
        }
    }

    fn linear(&self, tape: &mut Tape, vars: &[Var], name: &str, x: Var) -> Result<Var> {
        let w = self.var(vars, &format!("{name}.weight"))?;
        let b = self.var(vars, &format!("{name}.bias"))?;
        let y = tape.matmul(x, w)?;
        Ok(tape.add(y, b)?)
    }

    /// `[batch][time][inputs]` → `[batch][time][outputs]` with parameters
    /// bound by [`Backbone::bind`].
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        let shape = tape.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.inputs {
            return Err(Error::shape(
                "backbone_forward",
                format!("input {shape:?}, model expects width {}", self.inputs),
            ));
        }
        let dims = self.config.block_dims();
        let mut h = self.linear(tape, vars, "in_proj", x)?;
        for l in 0..self.config.n_layers {
            let n1 = self.norm(tape, vars, &format!("layers.{l}.norm1"), h)?;
            let bv = BlockVars::lookup(&self.params, vars, &format!("layers.{l}.mixer."))?;
            let m = mamba_block_forward(tape, &bv, dims, self.config.discretization, self.config.scan, n1)?;
            h = tape.add(h, m)?;
            let n2 = self.norm(tape, vars, &format!("layers.{l}.norm2"), h)?;
            let f = self.linear(tape, vars, &format!("layers.{l}.mlp.fc1"), n2)?;
            let f = tape.silu(f)?;
            let f = self.linear(tape, vars, &format!("layers.{l}.mlp.fc2"), f)?;
            h = tape.add(h, f)?;
        }
        let h = self.norm(tape, vars, "norm_f", h)?;
        self.linear(tape, vars, "out_proj", h)
    }

    /// Inference-only forward pass.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &vars, xv)?;
        Ok(tape.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BackboneConfig {
        BackboneConfig { d_model: 8, n_layers: 2, state_dim: 4, ..Default::default() }
    }

    #[test]
    fn initial_a_is_negative_integers() {
        let bb = Backbone::init(small(), 3, 3, 1).unwrap();
        let a_log = bb.params.get("layers.0.mixer.A_log").unwrap();
        for (i, v) in a_log.data().iter().enumerate() {
            assert!((-v.exp() + ((i % 4) as f64 + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_step_sizes_lie_in_range() {
        let bb = Backbone::init(small(), 3, 3, 2).unwrap();
        let b = bb.params.get("layers.1.mixer.dt_proj.bias").unwrap();
        for &v in b.data() {
            let dt = v.max(0.0) + (-v.abs()).exp().ln_1p();
            assert!((1e-3 - 1e-12..=1e-1 + 1e-12).contains(&dt), "{dt}");
        }
    }

    #[test]
    fn from_params_checks_shapes() {
        let bb = Backbone::init(small(), 3, 2, 0).unwrap();
        Backbone::from_params(small(), 3, 2, bb.params.clone()).unwrap();
        assert!(Backbone::from_params(small(), 4, 2, bb.params.clone()).is_err());
    }

    #[test]
    fn dt_rank_defaults_to_ceiling() {
        let mut c = small();
        assert_eq!(c.dt_rank(), 1);
        c.d_model = 33;
        assert_eq!(c.dt_rank(), 3);
    }

    #[test]
    fn layer_norm_variant_runs() {
        let cfg = BackboneConfig { norm: Norm::Layer, ..small() };
        let bb = Backbone::init(cfg, 2, 2, 0).unwrap();
        let y = bb.predict(&Tensor::ones(vec![1, 5, 2])).unwrap();
        assert_eq!(y.shape(), &[1, 5, 2]);
    }
}
