use ndarray::{Array2, Array3, ArrayView2};

use super::window::{single_checkpoint, InputMap, LatentInput, WindowModel};
use super::{check_variant, CheckpointSink, FitOutcome, LossCurve, ModelConfig, Surrogate, Variant};
use crate::checkpoint::Checkpoint;
use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::pca::PcaBasis;
use crate::pipeline::{clamp_nonneg, Which};
use crate::rollout::{LatentWindowPredictor, WindowPredictor};

/// Backbone fed with principal-component scores of the normalized initial
/// state, trained to emit every normalized variable.
pub struct Latent;

const NAME: &str = "latent";

struct LatentModel {
    config: ModelConfig,
    model: WindowModel,
}

impl LatentModel {
    fn latent(&self) -> &LatentInput {
        match &self.model.head.input {
            InputMap::Latent(li) => li,
            InputMap::Direct => unreachable!("latent models are built with a latent input map"),
        }
    }
}

impl Variant for Latent {
    fn name(&self) -> &'static str {
        NAME
    }

    fn description(&self) -> &'static str {
        "backbone on PCA-reduced initial states, reconstructing the full state"
    }

    fn fit(&self, train: &TrajectoryDataset, cfg: &ModelConfig, sink: &mut CheckpointSink<'_>) -> Result<FitOutcome> {
        cfg.validate()?;
        let vars = train.variables().to_vec();
        let p = vars.len();
        let dim = cfg.latent.dim.unwrap_or(p.div_ceil(2));
        if dim > p {
            return Err(Error::invalid("latent.dim", format!("{dim} exceeds the {p} state variables")));
        }
        let wrap = |m: &WindowModel| single_checkpoint(NAME, cfg, &vars, m);
        let (model, losses) = WindowModel::fit(train.data.view(), &vars, cfg, Some(dim), NAME, sink, &wrap)?;
        Ok(FitOutcome {
            surrogate: Box::new(LatentModel { config: cfg.clone(), model }),
            curves: vec![LossCurve { label: NAME.into(), losses }],
        })
    }

    fn restore(&self, ckpt: &Checkpoint) -> Result<Box<dyn Surrogate>> {
        check_variant(ckpt, NAME)?;
        let model = WindowModel::from_parts(&ckpt.meta_field("model")?, ckpt.params.clone())?;
        if !matches!(model.head.input, InputMap::Latent(_)) {
            return Err(Error::invalid("checkpoint", "latent model without a PCA basis"));
        }
        Ok(Box::new(LatentModel {
            config: serde_json::from_value(ckpt.config.clone())
                .map_err(|e| Error::invalid("checkpoint", format!("config: {e}")))?,
            model,
        }))
    }
}

impl WindowPredictor for LatentModel {
    fn n_vars(&self) -> usize {
        self.model.n_vars()
    }

    fn predict(&self, ics: ArrayView2<'_, f64>, _origins: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>> {
        self.model.predict(ics, width)
    }
}

impl LatentWindowPredictor for LatentModel {
    fn basis(&self) -> &PcaBasis {
        &self.latent().basis
    }

    fn to_basis_space(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut c = x.to_owned();
        clamp_nonneg(&mut c);
        self.model.head.stats.encode(&c, Which::Initial)
    }

    fn predict_latent(
        &self,
        z: ArrayView2<'_, f64>,
        _origins: ArrayView2<'_, f64>,
        width: usize,
    ) -> Result<Array3<f64>> {
        let scaled = self.latent().scale(z);
        self.model.run_inputs(scaled.view(), width)
    }
}

impl Surrogate for LatentModel {
    fn variant(&self) -> &'static str {
        NAME
    }

    fn variables(&self) -> &[String] {
        self.model.variables()
    }

    fn to_checkpoint(&self) -> Checkpoint {
        single_checkpoint(NAME, &self.config, self.model.variables(), &self.model)
    }

    fn as_latent(&self) -> Option<&dyn LatentWindowPredictor> {
        Some(self)
    }
}
