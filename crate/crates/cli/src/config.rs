use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stiffssm_core::pipeline::WindowPlan;
use stiffssm_core::rollout::RolloutPlan;
use stiffssm_core::ssm::BackboneConfig;
use stiffssm_core::training::TrainConfig;
use stiffssm_core::variants::{DataOptions, LatentOptions, RegimeOptions};
use stiffssm_core::{Error, ModelConfig, Registry, Result};

/// File written next to every command's outputs.
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutOptions {
    /// Window lengths; the training window plan repeated when unset.
    pub windows: Option<Vec<usize>>,
    /// Seed jumps above this value are flagged in the per-window report.
    pub jump_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// Floor relative-error denominators at 1e-3 of the mean truth norm.
    pub clip: bool,
}

/// Everything a run needs, read from a TOML file. Unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: String,
    /// Overrides `train.seed` when set.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub model: BackboneConfig,
    pub train: TrainConfig,
    pub window: WindowPlan,
    pub data: DataOptions,
    pub latent: LatentOptions,
    pub regime: RegimeOptions,
    pub rollout: RolloutOptions,
    pub metrics: MetricOptions,
    /// Generator parameters for `gen-data`: an `id` plus mechanism keys.
    pub mechanism: Option<serde_json::Value>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            variant: "standalone".to_string(),
            seed: None,
            paths: Paths::default(),
            model: BackboneConfig::default(),
            train: TrainConfig::default(),
            window: WindowPlan::default(),
            data: DataOptions::default(),
            latent: LatentOptions::default(),
            regime: RegimeOptions::default(),
            rollout: RolloutOptions::default(),
            metrics: MetricOptions::default(),
            mechanism: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config {}", origin.display()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Loads `path` when given, defaults otherwise.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Rebuilds a configuration around the model settings echoed in a
    /// checkpoint.
    pub fn from_model(variant: &str, model: ModelConfig) -> Self {
        ExperimentConfig {
            variant: variant.to_string(),
            seed: Some(model.train.seed),
            model: model.model,
            train: model.train,
            window: model.window,
            data: model.data,
            latent: model.latent,
            regime: model.regime,
            ..Self::default()
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut train = self.train.clone();
        if let Some(seed) = self.seed {
            train.seed = seed;
        }
        ModelConfig {
            model: self.model.clone(),
            train,
            window: self.window,
            data: self.data.clone(),
            latent: self.latent.clone(),
            regime: self.regime.clone(),
        }
    }

    pub fn rollout_plan(&self) -> RolloutPlan {
        match &self.rollout.windows {
            Some(w) => RolloutPlan { windows: w.clone() },
            None => self.window.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Registry::builtin().get(&self.variant)?;
        self.model_config().validate()?;
        if let Some(w) = &self.rollout.windows {
            RolloutPlan { windows: w.clone() }
                .validate()
                .map_err(|e| Error::invalid("rollout.windows", e.to_string()))?;
        }
        if let Some(t) = self.rollout.jump_threshold {
            if !(t >= 0.0) {
                return Err(Error::invalid("rollout.jump_threshold", "must be nonnegative"));
            }
        }
        if let Some(m) = &self.mechanism {
            if m.get("id").and_then(|v| v.as_str()).is_none() {
                return Err(Error::invalid("mechanism.id", "missing"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes to TOML")
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml(), Path::new("x")).unwrap(), cfg);
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg = ExperimentConfig::parse(
            "variant = \"latent\"\nseed = 4\n[model]\nd_model = 16\n[window]\nwidth = 51\n[latent]\ndim = 2\n",
            Path::new("x"),
        )
        .unwrap();
        assert_eq!(cfg.model.d_model, 16);
        assert_eq!(cfg.model.n_layers, 2);
        assert_eq!(cfg.window.width, 51);
        assert_eq!(cfg.window.segments, 99);
        assert_eq!(cfg.model_config().train.seed, 4);
        assert_eq!(cfg.rollout_plan(), RolloutPlan::fixed(51, 99));
    }

    #[test]
    fn unknown_and_invalid_keys_are_named() {
        let err = ExperimentConfig::parse("[train]\nlr = 0.1\n", Path::new("exp.toml")).unwrap_err();
        assert!(err.to_string().contains("lr"), "{err}");
        let err = ExperimentConfig::parse("[train]\nbatch_size = 0\n", Path::new("exp.toml")).unwrap_err();
        assert!(err.to_string().contains("train.batch_size"), "{err}");
        let err = ExperimentConfig::parse("variant = \"gru\"\n", Path::new("exp.toml")).unwrap_err();
        assert!(err.to_string().contains("gru"), "{err}");
        let err = ExperimentConfig::parse("[rollout]\nwindows = [101, 1]\n", Path::new("exp.toml")).unwrap_err();
        assert!(err.to_string().contains("rollout.windows"), "{err}");
    }

    #[test]
    fn mechanism_table_keeps_parameters() {
        let cfg = ExperimentConfig::parse(
            "[mechanism]\nid = \"one-step-ignition\"\nq = 1500.0\nt0 = [850.0, 1150.0]\n",
            Path::new("x"),
        )
        .unwrap();
        let m = cfg.mechanism.unwrap();
        assert_eq!(m["q"], 1500.0);
        assert_eq!(m["t0"][1], 1150.0);
    }
}
