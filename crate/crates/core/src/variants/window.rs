//! Shared machinery of every variant: a backbone trained on normalized,
//! time-decomposed windows and its normalization state.

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use stiffssm_tensor::Tensor;

use super::{CheckpointSink, ModelConfig};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::pca::{fit_pca, PcaBasis};
use crate::pipeline::{clamp_nonneg, time_decompose, NormStats, Which};
use crate::ssm::{Backbone, BackboneConfig, ParamSet};
use crate::training::{tile_rows, train, WindowData};

/// Rows per inference chunk.
const PREDICT_CHUNK: usize = 64;

/// Principal-component scores of normalized initial conditions, rescaled to
/// `[−1, 1]` with the training score ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentInput {
    pub basis: PcaBasis,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl LatentInput {
    pub fn fit(normalized_ics: ArrayView2<'_, f64>, dim: usize) -> Result<Self> {
        let basis = fit_pca(normalized_ics, dim)?;
        let pcs = basis.project(normalized_ics)?;
        let min = pcs.columns().into_iter().map(|c| c.fold(f64::INFINITY, |m, &v| m.min(v))).collect();
        let max = pcs.columns().into_iter().map(|c| c.fold(f64::NEG_INFINITY, |m, &v| m.max(v))).collect();
        Ok(LatentInput { basis, min, max })
    }

    /// Rescales raw scores `[n][d]`; components with no spread map to 0.
    pub fn scale(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = z.to_owned();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                let span = self.max[k] - self.min[k];
                *v = if span > 0.0 { 2.0 * (*v - self.min[k]) / span - 1.0 } else { 0.0 };
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InputMap {
    Direct,
    Latent(LatentInput),
}

/// Everything around the backbone that turns physical initial states into
/// model inputs and model outputs back into physical windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowHead {
    pub stats: NormStats,
    pub time_feature: bool,
    pub input: InputMap,
    pub backbone: BackboneConfig,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowModel {
    pub head: WindowHead,
    pub backbone: Backbone,
}

/// Training-ready tensors derived from model-space trajectories.
pub struct Prepared {
    pub head: WindowHead,
    pub data: WindowData,
}

/// Clamp, decompose, fit statistics, encode targets and window initial
/// states, and map inputs.
pub fn prepare(
    trajectories: ArrayView3<'_, f64>,
    variables: &[String],
    cfg: &ModelConfig,
    latent_dim: Option<usize>,
) -> Result<Prepared> {
    let mut x = trajectories.to_owned();
    clamp_nonneg(&mut x);
    let segments = time_decompose(x.view(), cfg.window)?;
    let ics = segments.index_axis(Axis(1), 0).to_owned();
    let stats = NormStats::fit(variables, segments.view(), ics.view(), cfg.data.exponent)?;
    let targets = stats.encode(&segments, Which::Trajectory)?;
    let ics_n = stats.encode(&ics, Which::Initial)?;
    let (input, initials) = match latent_dim {
        None => (InputMap::Direct, ics_n),
        Some(d) => {
            let li = LatentInput::fit(ics_n.view(), d)?;
            let z = li.basis.project(ics_n.view())?;
            let scaled = li.scale(z.view());
            (InputMap::Latent(li), scaled)
        }
    };
    let p = variables.len();
    let inputs = initials.dim().1 + usize::from(cfg.data.time_feature);
    let head = WindowHead {
        stats,
        time_feature: cfg.data.time_feature,
        input,
        backbone: cfg.model.clone(),
        inputs,
        outputs: p,
    };
    let data = WindowData { initials, targets, time_feature: cfg.data.time_feature };
    Ok(Prepared { head, data })
}

impl WindowModel {
    /// Prepares data, initializes a backbone from the training seed and
    /// trains it. Checkpoints go to `sink` under `label`.
    pub fn fit(
        trajectories: ArrayView3<'_, f64>,
        variables: &[String],
        cfg: &ModelConfig,
        latent_dim: Option<usize>,
        label: &str,
        sink: &mut CheckpointSink<'_>,
        wrap: &dyn Fn(&WindowModel) -> Checkpoint,
    ) -> Result<(WindowModel, Vec<f64>)> {
        let Prepared { head, data } = prepare(trajectories, variables, cfg, latent_dim)?;
        log::info!(
            "{label}: {} training windows of width {}, {} → {} features",
            data.len(),
            data.width(),
            head.inputs,
            head.outputs
        );
        let mut backbone = Backbone::init(cfg.model.clone(), head.inputs, head.outputs, cfg.train.seed)?;
        log::info!("{label}: {} parameters", backbone.params.numel());
        let losses = {
            let mut hook = |step: usize, bb: &Backbone| {
                let snapshot = WindowModel { head: head.clone(), backbone: bb.clone() };
                sink(label, step, wrap(&snapshot))
            };
            train(&mut backbone, &data, &cfg.train, &mut hook)?
        };
        Ok((WindowModel { head, backbone }, losses))
    }

    pub fn variables(&self) -> &[String] {
        &self.head.stats.variables
    }

    pub fn n_vars(&self) -> usize {
        self.head.outputs
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::to_value(&self.head).expect("head serializes")
    }

    pub fn from_parts(meta: &serde_json::Value, params: ParamSet) -> Result<Self> {
        let head: WindowHead = serde_json::from_value(meta.clone())
            .map_err(|e| Error::invalid("checkpoint", format!("model head: {e}")))?;
        let backbone = Backbone::from_params(head.backbone.clone(), head.inputs, head.outputs, params)?;
        Ok(WindowModel { head, backbone })
    }

    /// Normalized initial states → model inputs before tiling.
    fn map_inputs(&self, ics_n: Array2<f64>) -> Result<Array2<f64>> {
        match &self.head.input {
            InputMap::Direct => Ok(ics_n),
            InputMap::Latent(li) => Ok(li.scale(li.basis.project(ics_n.view())?.view())),
        }
    }

    /// Model inputs `[n][p_in]` → physical windows `[n][w][p]`.
    pub fn run_inputs(&self, inputs: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>> {
        let n = inputs.dim().0;
        let p = self.n_vars();
        let owned = inputs.to_owned();
        let chunks: Vec<(usize, usize)> =
            (0..n).step_by(PREDICT_CHUNK).map(|s| (s, (s + PREDICT_CHUNK).min(n))).collect();
        let parts: Vec<Result<Tensor>> = chunks
            .par_iter()
            .map(|&(a, b)| {
                let idx: Vec<usize> = (a..b).collect();
                let x = tile_rows(&owned, &idx, width, self.head.time_feature);
                self.backbone.predict(&x)
            })
            .collect();
        let mut normalized = Array3::zeros((n, width, p));
        for (&(a, b), part) in chunks.iter().zip(parts) {
            let t = part?;
            let arr = Array3::from_shape_vec((b - a, width, p), t.into_data()).expect("backbone output shape");
            normalized.slice_mut(s![a..b, .., ..]).assign(&arr);
        }
        let decoded = self.head.stats.decode(&normalized, Which::Trajectory)?;
        if decoded.clamped > 0 {
            log::warn!("{} predicted values fell below the normalization range and were clamped to 0", decoded.clamped);
        }
        Ok(decoded.values)
    }

    /// Physical model-space initial states `[n][p]` → physical windows.
    pub fn predict(&self, ics: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>> {
        let mut clamped = ics.to_owned();
        clamp_nonneg(&mut clamped);
        let ics_n = self.head.stats.encode(&clamped, Which::Initial)?;
        let inputs = self.map_inputs(ics_n)?;
        self.run_inputs(inputs.view(), width)
    }
}

/// Checkpoint of a single window model.
pub fn single_checkpoint(variant: &str, cfg: &ModelConfig, variables: &[String], model: &WindowModel) -> Checkpoint {
    Checkpoint {
        variant: variant.to_string(),
        seed: cfg.train.seed,
        config: serde_json::to_value(cfg).expect("config serializes"),
        meta: json!({ "variables": variables, "model": model.meta() }),
        params: model.backbone.params.clone(),
    }
}
