//! Ignition threshold and regime partitioning.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeThreshold {
    /// Largest initial temperature among flat profiles.
    pub tau: f64,
    /// Slope tolerance per time step.
    pub epsilon: f64,
    pub n_t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `T(0) ≤ τ`, non-igniting.
    Below,
    /// `T(0) > τ`, igniting.
    Above,
}

/// `temps` is `[sample][time]`. Profiles whose mean slope
/// `(T_last − T_first)/(n_t − 1)` is below `epsilon` are flat; `τ` is the
/// largest initial temperature among them.
pub fn compute_tau(temps: ArrayView2<'_, f64>, epsilon: f64) -> Result<RegimeThreshold> {
    let n_t = temps.dim().1;
    if n_t < 2 {
        return Err(Error::invalid("regimes", "need at least two time points"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("regimes.epsilon", format!("must be positive, got {epsilon}")));
    }
    let tau = temps
        .rows()
        .into_iter()
        .filter(|r| (r[n_t - 1] - r[0]) / ((n_t - 1) as f64) < epsilon)
        .map(|r| r[0])
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))));
    match tau {
        Some(tau) => Ok(RegimeThreshold { tau, epsilon, n_t }),
        None => Err(Error::NoFlatRegime { epsilon }),
    }
}

impl RegimeThreshold {
    pub fn route(&self, t0: f64) -> Regime {
        if t0 <= self.tau {
            Regime::Below
        } else {
            Regime::Above
        }
    }
}

/// Sample indices on each side of `tau`, judged by the initial value of
/// column `temp`.
pub fn split_indices(ds: &TrajectoryDataset, temp: usize, tau: f64) -> (Vec<usize>, Vec<usize>) {
    let threshold = RegimeThreshold { tau, epsilon: 1.0, n_t: ds.n_t() };
    (0..ds.n_samples()).partition(|&i| threshold.route(ds.data[[i, 0, temp]]) == Regime::Below)
}

pub fn partition(ds: &TrajectoryDataset, temp: usize, tau: f64) -> (TrajectoryDataset, TrajectoryDataset) {
    let (below, above) = split_indices(ds, temp, tau);
    (ds.select(&below), ds.select(&above))
}
