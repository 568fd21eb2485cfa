use ndarray::{Array3, ArrayView2};

use super::window::{single_checkpoint, WindowModel};
use super::{check_variant, CheckpointSink, FitOutcome, LossCurve, ModelConfig, Surrogate, Variant};
use crate::checkpoint::Checkpoint;
use crate::dataset::TrajectoryDataset;
use crate::error::Result;
use crate::rollout::WindowPredictor;

/// One backbone over all state variables.
pub struct Standalone;

const NAME: &str = "standalone";

pub(super) struct StandaloneModel {
    pub(super) config: ModelConfig,
    pub(super) model: WindowModel,
}

impl Variant for Standalone {
    fn name(&self) -> &'static str {
        NAME
    }

    fn description(&self) -> &'static str {
        "single backbone mapping initial states to windows of every variable"
    }

    fn fit(&self, train: &TrajectoryDataset, cfg: &ModelConfig, sink: &mut CheckpointSink<'_>) -> Result<FitOutcome> {
        cfg.validate()?;
        let vars = train.variables().to_vec();
        let wrap = |m: &WindowModel| single_checkpoint(NAME, cfg, &vars, m);
        let (model, losses) = WindowModel::fit(train.data.view(), &vars, cfg, None, NAME, sink, &wrap)?;
        Ok(FitOutcome {
            surrogate: Box::new(StandaloneModel { config: cfg.clone(), model }),
            curves: vec![LossCurve { label: NAME.into(), losses }],
        })
    }

    fn restore(&self, ckpt: &Checkpoint) -> Result<Box<dyn Surrogate>> {
        check_variant(ckpt, NAME)?;
        Ok(Box::new(StandaloneModel {
            config: serde_json::from_value(ckpt.config.clone())
                .map_err(|e| crate::Error::invalid("checkpoint", format!("config: {e}")))?,
            model: WindowModel::from_parts(&ckpt.meta_field("model")?, ckpt.params.clone())?,
        }))
    }
}

impl WindowPredictor for StandaloneModel {
    fn n_vars(&self) -> usize {
        self.model.n_vars()
    }

    fn predict(&self, ics: ArrayView2<'_, f64>, _origins: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>> {
        self.model.predict(ics, width)
    }
}

impl Surrogate for StandaloneModel {
    fn variant(&self) -> &'static str {
        NAME
    }

    fn variables(&self) -> &[String] {
        self.model.variables()
    }

    fn to_checkpoint(&self) -> Checkpoint {
        single_checkpoint(NAME, &self.config, self.model.variables(), &self.model)
    }
}
