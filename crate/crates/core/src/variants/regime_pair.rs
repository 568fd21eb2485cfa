use ndarray::{Array3, ArrayView2, Axis};
use serde_json::json;

use super::window::{single_checkpoint, WindowModel};
use super::{check_variant, CheckpointSink, FitOutcome, LossCurve, ModelConfig, Surrogate, Variant};
use crate::checkpoint::Checkpoint;
use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::regimes::{compute_tau, partition, Regime, RegimeThreshold};
use crate::rollout::WindowPredictor;

/// Two backbones, one per side of the ignition threshold, routed by the
/// initial temperature of the trajectory being predicted.
pub struct RegimePair;

const NAME: &str = "regime-pair";
const BELOW: &str = "below";
const ABOVE: &str = "above";

struct RegimePairModel {
    config: ModelConfig,
    variables: Vec<String>,
    temperature: usize,
    threshold: RegimeThreshold,
    below: WindowModel,
    above: WindowModel,
}

impl RegimePairModel {
    fn checkpoint(&self) -> Checkpoint {
        let mut params = self.below.backbone.params.prefixed(&format!("{BELOW}/"));
        params.extend(self.above.backbone.params.prefixed(&format!("{ABOVE}/"))).expect("prefixes keep names distinct");
        Checkpoint {
            variant: NAME.to_string(),
            seed: self.config.train.seed,
            config: serde_json::to_value(&self.config).expect("config serializes"),
            meta: json!({
                "variables": self.variables,
                "temperature": self.config.regime.temperature,
                "threshold": self.threshold,
                BELOW: self.below.meta(),
                ABOVE: self.above.meta(),
            }),
            params,
        }
    }
}

fn temperature_column(variables: &[String], name: &str) -> Result<usize> {
    variables
        .iter()
        .position(|v| v == name)
        .ok_or_else(|| Error::invalid("regime.temperature", format!("no variable named `{name}`")))
}

impl Variant for RegimePair {
    fn name(&self) -> &'static str {
        NAME
    }

    fn description(&self) -> &'static str {
        "separate backbones below and above the ignition threshold"
    }

    fn fit(&self, train: &TrajectoryDataset, cfg: &ModelConfig, sink: &mut CheckpointSink<'_>) -> Result<FitOutcome> {
        cfg.validate()?;
        let variables = train.variables().to_vec();
        let temperature = temperature_column(&variables, &cfg.regime.temperature)?;
        let temps = train.data.index_axis(Axis(2), temperature);
        let threshold = compute_tau(temps, cfg.regime.epsilon)?;
        let (lo, hi) = partition(train, temperature, threshold.tau);
        log::info!(
            "threshold {:.3} splits {} training samples into {} below and {} above",
            threshold.tau,
            train.n_samples(),
            lo.n_samples(),
            hi.n_samples()
        );
        for (side, ds) in [(BELOW, &lo), (ABOVE, &hi)] {
            if ds.n_samples() == 0 {
                return Err(Error::invalid(
                    "training data",
                    format!("no samples {side} the threshold {}", threshold.tau),
                ));
            }
        }
        let mut fit_side = |label: &str, ds: &TrajectoryDataset| {
            let wrap = |m: &WindowModel| single_checkpoint("standalone", cfg, &variables, m);
            WindowModel::fit(ds.data.view(), &variables, cfg, None, label, sink, &wrap)
        };
        let (below, below_losses) = fit_side(BELOW, &lo)?;
        let (above, above_losses) = fit_side(ABOVE, &hi)?;
        Ok(FitOutcome {
            surrogate: Box::new(RegimePairModel {
                config: cfg.clone(),
                variables,
                temperature,
                threshold,
                below,
                above,
            }),
            curves: vec![
                LossCurve { label: BELOW.into(), losses: below_losses },
                LossCurve { label: ABOVE.into(), losses: above_losses },
            ],
        })
    }

    fn restore(&self, ckpt: &Checkpoint) -> Result<Box<dyn Surrogate>> {
        check_variant(ckpt, NAME)?;
        let config: ModelConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::invalid("checkpoint", format!("config: {e}")))?;
        let variables: Vec<String> = ckpt.meta_field("variables")?;
        let name: String = ckpt.meta_field("temperature")?;
        let temperature = temperature_column(&variables, &name)?;
        let side = |label: &str| {
            WindowModel::from_parts(&ckpt.meta_field(label)?, ckpt.params.strip_prefix(&format!("{label}/")))
        };
        Ok(Box::new(RegimePairModel {
            config,
            temperature,
            threshold: ckpt.meta_field("threshold")?,
            below: side(BELOW)?,
            above: side(ABOVE)?,
            variables,
        }))
    }
}

impl WindowPredictor for RegimePairModel {
    fn n_vars(&self) -> usize {
        self.variables.len()
    }

    fn predict(&self, ics: ArrayView2<'_, f64>, origins: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>> {
        let n = ics.dim().0;
        let (lo, hi): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| self.threshold.route(origins[[i, self.temperature]]) == Regime::Below);
        let mut out = Array3::zeros((n, width, self.n_vars()));
        for (idx, model) in [(lo, &self.below), (hi, &self.above)] {
            if idx.is_empty() {
                continue;
            }
            let pred = model.predict(ics.select(Axis(0), &idx).view(), width)?;
            for (k, &i) in idx.iter().enumerate() {
                out.index_axis_mut(Axis(0), i).assign(&pred.index_axis(Axis(0), k));
            }
        }
        Ok(out)
    }
}

impl Surrogate for RegimePairModel {
    fn variant(&self) -> &'static str {
        NAME
    }

    fn variables(&self) -> &[String] {
        &self.variables
    }

    fn to_checkpoint(&self) -> Checkpoint {
        self.checkpoint()
    }
}
