use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::window::WindowModel;
use super::{check_variant, CheckpointSink, FitOutcome, LossCurve, ModelConfig, Surrogate, Variant};
use crate::checkpoint::Checkpoint;
use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::rollout::WindowPredictor;
use crate::simplex::{forward_map, inverse_map};

/// Backbone over the non-species variables plus the `m − 1` simplex
/// encodings of the mass fractions; predictions are decoded through the
/// inverse map so fractions sum to one.
pub struct MassConserving;

const NAME: &str = "mass-conserving";

/// Gap kept below 1 for the encoded fractions that enter the linear solve.
const UPPER_GAP: f64 = 1e-12;

/// Column bookkeeping between the physical state and the encoded state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimplexLayout {
    pub variables: Vec<String>,
    pub species: Vec<String>,
    species_cols: Vec<usize>,
    other_cols: Vec<usize>,
}

impl SimplexLayout {
    pub fn new(variables: &[String], species: &[String]) -> Result<Self> {
        if species.len() < 2 {
            return Err(Error::invalid(
                "dataset species",
                "the mass-conserving model needs at least two species in the manifest",
            ));
        }
        let species_cols = species
            .iter()
            .map(|s| {
                variables
                    .iter()
                    .position(|v| v == s)
                    .ok_or_else(|| Error::invalid("dataset species", format!("`{s}` is not a variable")))
            })
            .collect::<Result<Vec<_>>>()?;
        let other_cols = (0..variables.len()).filter(|c| !species_cols.contains(c)).collect();
        Ok(SimplexLayout { variables: variables.to_vec(), species: species.to_vec(), species_cols, other_cols })
    }

    /// Names of the encoded state: other variables, then `z:<species>` for
    /// all species but the last.
    pub fn model_variables(&self) -> Vec<String> {
        self.other_cols
            .iter()
            .map(|&c| self.variables[c].clone())
            .chain(self.species[..self.species.len() - 1].iter().map(|s| format!("z:{s}")))
            .collect()
    }

    pub fn encode_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let y: Vec<f64> = self.species_cols.iter().map(|&c| row[c]).collect();
        let mut out: Vec<f64> = self.other_cols.iter().map(|&c| row[c]).collect();
        out.extend(forward_map(&y)?);
        Ok(out)
    }

    /// Encoded values are clamped into the range the forward map produces,
    /// which keeps the inverse on the simplex.
    pub fn decode_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let k = self.other_cols.len();
        let m = self.species.len();
        let z: Vec<f64> = row[k..]
            .iter()
            .enumerate()
            .map(|(i, &v)| if i + 1 < m - 1 { v.clamp(0.0, 1.0 - UPPER_GAP) } else { v.clamp(0.0, 1.0) })
            .collect();
        let y = inverse_map(&z)?;
        let mut out = vec![0.0; self.variables.len()];
        for (i, &c) in self.other_cols.iter().enumerate() {
            out[c] = row[i];
        }
        for (i, &c) in self.species_cols.iter().enumerate() {
            out[c] = y[i];
        }
        Ok(out)
    }

    pub fn encode_rows(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let width = self.variables.len() - 1;
        let mut out = Array2::zeros((x.dim().0, width));
        for (i, row) in x.rows().into_iter().enumerate() {
            let e = self.encode_row(&row.to_vec())?;
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&e));
        }
        Ok(out)
    }

    pub fn decode_windows(&self, z: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
        let (n, w, _) = z.dim();
        let mut out = Array3::zeros((n, w, self.variables.len()));
        for i in 0..n {
            for t in 0..w {
                let d = self.decode_row(&z.index_axis(Axis(0), i).row(t).to_vec())?;
                out.index_axis_mut(Axis(0), i).row_mut(t).assign(&ndarray::ArrayView1::from(&d));
            }
        }
        Ok(out)
    }

    /// Encodes whole trajectories, skipping samples that touch a degenerate
    /// face. Returns the encoded array and the kept sample indices.
    pub fn encode_dataset(&self, x: ArrayView3<'_, f64>) -> (Array3<f64>, Vec<usize>) {
        let (n, n_t, _) = x.dim();
        let width = self.variables.len() - 1;
        let mut kept = Vec::new();
        let mut rows = Vec::with_capacity(n * n_t * width);
        'samples: for i in 0..n {
            let start = rows.len();
            for t in 0..n_t {
                match self.encode_row(&x.index_axis(Axis(0), i).row(t).to_vec()) {
                    Ok(e) => rows.extend(e),
                    Err(err) => {
                        log::warn!("skipping sample {i}: {err}");
                        rows.truncate(start);
                        continue 'samples;
                    }
                }
            }
            kept.push(i);
        }
        let arr = Array3::from_shape_vec((kept.len(), n_t, width), rows).expect("rows per kept sample");
        (arr, kept)
    }
}

struct MassConservingModel {
    config: ModelConfig,
    layout: SimplexLayout,
    model: WindowModel,
}

fn checkpoint(cfg: &ModelConfig, layout: &SimplexLayout, model: &WindowModel) -> Checkpoint {
    Checkpoint {
        variant: NAME.to_string(),
        seed: cfg.train.seed,
        config: serde_json::to_value(cfg).expect("config serializes"),
        meta: json!({ "variables": layout.variables, "layout": layout, "model": model.meta() }),
        params: model.backbone.params.clone(),
    }
}

impl Variant for MassConserving {
    fn name(&self) -> &'static str {
        NAME
    }

    fn description(&self) -> &'static str {
        "backbone on simplex-encoded mass fractions; predictions sum to one"
    }

    fn fit(&self, train: &TrajectoryDataset, cfg: &ModelConfig, sink: &mut CheckpointSink<'_>) -> Result<FitOutcome> {
        cfg.validate()?;
        let layout = SimplexLayout::new(train.variables(), &train.manifest.species)?;
        let (encoded, kept) = layout.encode_dataset(train.data.view());
        if kept.is_empty() {
            return Err(Error::invalid("training data", "every sample touches a degenerate simplex face"));
        }
        let vars = layout.model_variables();
        let wrap = |m: &WindowModel| checkpoint(cfg, &layout, m);
        let (model, losses) = WindowModel::fit(encoded.view(), &vars, cfg, None, NAME, sink, &wrap)?;
        Ok(FitOutcome {
            surrogate: Box::new(MassConservingModel { config: cfg.clone(), layout, model }),
            curves: vec![LossCurve { label: NAME.into(), losses }],
        })
    }

    fn restore(&self, ckpt: &Checkpoint) -> Result<Box<dyn Surrogate>> {
        check_variant(ckpt, NAME)?;
        Ok(Box::new(MassConservingModel {
            config: serde_json::from_value(ckpt.config.clone())
                .map_err(|e| Error::invalid("checkpoint", format!("config: {e}")))?,
            layout: ckpt.meta_field("layout")?,
            model: WindowModel::from_parts(&ckpt.meta_field("model")?, ckpt.params.clone())?,
        }))
    }
}

impl WindowPredictor for MassConservingModel {
    fn n_vars(&self) -> usize {
        self.layout.variables.len()
    }

    fn predict(&self, ics: ArrayView2<'_, f64>, _origins: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>> {
        let z0 = self.layout.encode_rows(ics)?;
        let z = self.model.predict(z0.view(), width)?;
        self.layout.decode_windows(z.view())
    }
}

impl Surrogate for MassConservingModel {
    fn variant(&self) -> &'static str {
        NAME
    }

    fn variables(&self) -> &[String] {
        &self.layout.variables
    }

    fn to_checkpoint(&self) -> Checkpoint {
        checkpoint(&self.config, &self.layout, &self.model)
    }
}
