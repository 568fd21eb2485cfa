//! Model variants behind a common interface, selected by name at runtime.
//!
//! A [`Variant`] knows how to train a [`Surrogate`] from a training dataset
//! and how to restore one from a checkpoint. [`Registry::builtin`] holds the
//! four shipped variants; others can be added with [`Registry::register`].

mod latent;
mod mass_conserving;
mod regime_pair;
mod standalone;
mod window;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::pipeline::{WindowPlan, DEFAULT_EXPONENT};
use crate::rollout::{LatentWindowPredictor, WindowPredictor};
use crate::ssm::BackboneConfig;
use crate::training::TrainConfig;

pub use latent::Latent;
pub use mass_conserving::{MassConserving, SimplexLayout};
pub use regime_pair::RegimePair;
pub use standalone::Standalone;
pub use window::{prepare, InputMap, LatentInput, Prepared, WindowHead, WindowModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOptions {
    /// Power-transform exponent.
    pub exponent: f64,
    /// Append the position in the window as an input channel.
    pub time_feature: bool,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions { exponent: DEFAULT_EXPONENT, time_feature: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatentOptions {
    /// Latent dimension; half the variable count (rounded up) when unset.
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeOptions {
    /// Mean-slope tolerance per time step for a profile to count as flat.
    pub epsilon: f64,
    /// Name of the temperature variable.
    pub temperature: String,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        RegimeOptions { epsilon: 0.01, temperature: "T".to_string() }
    }
}

/// Everything a variant needs to build and train its models.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub model: BackboneConfig,
    pub train: TrainConfig,
    pub window: WindowPlan,
    pub data: DataOptions,
    pub latent: LatentOptions,
    pub regime: RegimeOptions,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.window.validate()?;
        if !(self.data.exponent > 0.0) || !self.data.exponent.is_finite() {
            return Err(Error::invalid("data.exponent", "must be positive"));
        }
        if self.latent.dim == Some(0) {
            return Err(Error::invalid("latent.dim", "must be at least 1"));
        }
        if !(self.regime.epsilon > 0.0) {
            return Err(Error::invalid("regime.epsilon", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub label: String,
    pub losses: Vec<f64>,
}

pub struct FitOutcome {
    pub surrogate: Box<dyn Surrogate>,
    pub curves: Vec<LossCurve>,
}

/// Receives `(label, step, checkpoint)` during training.
pub type CheckpointSink<'a> = dyn FnMut(&str, usize, Checkpoint) -> Result<()> + 'a;

/// A trained model in physical units.
pub trait Surrogate: WindowPredictor + Send + Sync {
    fn variant(&self) -> &'static str;

    fn variables(&self) -> &[String];

    fn to_checkpoint(&self) -> Checkpoint;

    /// The latent view of the model, for variants that take principal
    /// component scores as input.
    fn as_latent(&self) -> Option<&dyn LatentWindowPredictor> {
        None
    }
}

pub trait Variant: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn fit(&self, train: &TrajectoryDataset, cfg: &ModelConfig, sink: &mut CheckpointSink<'_>) -> Result<FitOutcome>;

    fn restore(&self, ckpt: &Checkpoint) -> Result<Box<dyn Surrogate>>;
}

#[derive(Default)]
pub struct Registry {
    variants: BTreeMap<&'static str, Box<dyn Variant>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut r = Registry::new();
        for v in
            [Box::new(Standalone) as Box<dyn Variant>, Box::new(MassConserving), Box::new(Latent), Box::new(RegimePair)]
        {
            r.register(v).expect("builtin names are distinct");
        }
        r
    }

    pub fn register(&mut self, variant: Box<dyn Variant>) -> Result<()> {
        let name = variant.name();
        if self.variants.contains_key(name) {
            return Err(Error::invalid("variant", format!("`{name}` is already registered")));
        }
        self.variants.insert(name, variant);
        Ok(())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.variants.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Variant> {
        self.variants
            .get(name)
            .map(|v| v.as_ref())
            .ok_or_else(|| Error::UnknownVariant { name: name.to_string(), available: self.names().join(", ") })
    }

    /// Rebuilds a surrogate with the variant named in the checkpoint.
    pub fn restore(&self, ckpt: &Checkpoint) -> Result<Box<dyn Surrogate>> {
        self.get(&ckpt.variant)?.restore(ckpt)
    }
}

fn check_variant(ckpt: &Checkpoint, name: &str) -> Result<()> {
    if ckpt.variant != name {
        return Err(Error::invalid("checkpoint", format!("holds a `{}` model, not `{name}`", ckpt.variant)));
    }
    Ok(())
}
