//! Mean-squared-error training with Adam and a multiplicative schedule.

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stiffssm_tensor::{Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::ssm::{Backbone, ParamSet};

/// Learning-rate multiplier as a function of the epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    #[default]
    Constant,
    /// Linear from 1 at the first epoch to `final_factor` at the last.
    LinearDecay { final_factor: f64 },
    /// Multiply by `factor` every `every` epochs.
    StepDecay { every: usize, factor: f64 },
}

impl Schedule {
    pub fn factor(&self, epoch: usize, total_epochs: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::LinearDecay { final_factor } => {
                if total_epochs <= 1 {
                    1.0
                } else {
                    let f = epoch.min(total_epochs - 1) as f64 / (total_epochs - 1) as f64;
                    1.0 + (final_factor - 1.0) * f
                }
            }
            Schedule::StepDecay { every, factor } => factor.powi((epoch / every.max(1)) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    /// Total optimizer steps.
    pub steps: usize,
    pub seed: u64,
    /// Intermediate checkpoint cadence in steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            schedule: Schedule::Constant,
            batch_size: 256,
            steps: 1000,
            seed: 0,
            checkpoint_every: 500,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("train.learning_rate", "must be finite and nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train.batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("train.beta1", "moment decay rates must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid("train.adam_eps", "must be positive"));
        }
        if let Schedule::StepDecay { every: 0, .. } = self.schedule {
            return Err(Error::invalid("train.schedule.every", "must be at least 1"));
        }
        Ok(())
    }
}

/// Adam moments for every tensor of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(params: &ParamSet, cfg: &TrainConfig) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam { beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.adam_eps, m: zeros(), v: zeros(), t: 0 }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gv;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gv * gv;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                *pv -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Mean over all elements of `(pred − target)²`.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::shape("mse_loss", format!("{:?} vs {:?}", tape.shape(pred), tape.shape(target))));
    }
    let d = tape.sub(pred, target)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq)?)
}

/// Prepared training windows: normalized, already input-mapped initial
/// conditions and normalized targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowData {
    /// `[n][p_in]`, tiled over the window at batch time.
    pub initials: Array2<f64>,
    /// `[n][w][p_out]`.
    pub targets: Array3<f64>,
    /// Append the position-in-window channel to the tiled inputs.
    pub time_feature: bool,
}

impl WindowData {
    pub fn len(&self) -> usize {
        self.initials.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.targets.dim().1
    }

    /// Model input width including the optional time channel.
    pub fn input_width(&self) -> usize {
        self.initials.dim().1 + usize::from(self.time_feature)
    }

    pub fn batch(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let (w, p_out) = (self.width(), self.targets.dim().2);
        let mut out = Vec::with_capacity(idx.len() * w * p_out);
        for &i in idx {
            out.extend(self.targets.index_axis(ndarray::Axis(0), i).iter());
        }
        let targets = Tensor::new(vec![idx.len(), w, p_out], out).expect("sizes agree");
        (tile_rows(&self.initials, idx, w, self.time_feature), targets)
    }
}

/// `[len(idx)][w][p (+1)]` tensor of tiled rows of `initials`.
pub fn tile_rows(initials: &Array2<f64>, idx: &[usize], w: usize, time_feature: bool) -> Tensor {
    let p = initials.dim().1;
    let width = p + usize::from(time_feature);
    let denom = (w.max(2) - 1) as f64;
    let mut data = Vec::with_capacity(idx.len() * w * width);
    for &i in idx {
        let row = initials.row(i);
        for t in 0..w {
            data.extend(row.iter());
            if time_feature {
                data.push(2.0 * t as f64 / denom - 1.0);
            }
        }
    }
    Tensor::new(vec![idx.len(), w, width], data).expect("sizes agree")
}

/// Loss and parameter gradients for one batch.
pub fn loss_and_grad(backbone: &Backbone, inputs: &Tensor, targets: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars = backbone.bind(&mut tape, true);
    let x = tape.constant(inputs.clone());
    let y = tape.constant(targets.clone());
    let pred = backbone.forward(&mut tape, &vars, x)?;
    let loss = mse_loss(&mut tape, pred, y)?;
    let value = tape.value(loss).item()?;
    let grads = tape.backward(loss, &vars)?;
    Ok((value, grads))
}

/// Called with the step count and current parameters at every checkpoint.
pub type CheckpointHook<'a> = dyn FnMut(usize, &Backbone) -> Result<()> + 'a;

/// Runs `cfg.steps` optimizer steps over shuffled mini-batches and returns
/// the per-step loss. Execution is single-threaded and bit-reproducible for
/// a fixed seed.
pub fn train(
    backbone: &mut Backbone,
    data: &WindowData,
    cfg: &TrainConfig,
    on_checkpoint: &mut CheckpointHook<'_>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training data", "no windows to train on"));
    }
    if data.input_width() != backbone.inputs || data.targets.dim().2 != backbone.outputs {
        return Err(Error::shape(
            "train",
            format!(
                "data widths {}→{} vs model {}→{}",
                data.input_width(),
                data.targets.dim().2,
                backbone.inputs,
                backbone.outputs
            ),
        ));
    }
    let n = data.len();
    let bs = cfg.batch_size.min(n);
    let per_epoch = n.div_ceil(bs);
    let total_epochs = cfg.steps.div_ceil(per_epoch).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (mut epoch, mut batch_in_epoch) = (0, 0);
    let mut adam = Adam::new(&backbone.params, cfg);
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        if batch_in_epoch == per_epoch {
            epoch += 1;
            batch_in_epoch = 0;
            order.shuffle(&mut rng);
        }
        let start = batch_in_epoch * bs;
        let idx = &order[start..(start + bs).min(n)];
        let (x, y) = data.batch(idx);
        let (loss, grads) = match loss_and_grad(backbone, &x, &y) {
            Err(Error::Tensor(stiffssm_tensor::TensorError::NonFinite { .. })) => {
                return Err(Error::NonFiniteLoss { iteration: step, batch: batch_in_epoch })
            }
            r => r?,
        };
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { iteration: step, batch: batch_in_epoch });
        }
        let lr = cfg.learning_rate * cfg.schedule.factor(epoch, total_epochs);
        adam.step(backbone.params.tensors_mut(), &grads, lr);
        losses.push(loss);
        batch_in_epoch += 1;

        let done = step + 1;
        if done % 100 == 0 || done == cfg.steps {
            log::info!("step {done}/{} loss {loss:.3e} lr {lr:.2e}", cfg.steps);
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != cfg.steps {
            on_checkpoint(done, backbone)?;
        }
    }
    on_checkpoint(cfg.steps, backbone)?;
    Ok(losses)
}
