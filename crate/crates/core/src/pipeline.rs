//! Clamping, power transform, min–max normalization, time decomposition,
//! initial-condition tiling and reconstruction.

use ndarray::{s, Array, Array2, Array3, ArrayView2, ArrayView3, Axis, Dimension};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EXPONENT: f64 = 0.2;

/// Replaces negative entries with zero.
pub fn clamp_nonneg<D: Dimension>(x: &mut Array<f64, D>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Which normalizer to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Trajectory,
    Initial,
}

/// Per-variable ranges of power-transformed training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub variables: Vec<String>,
    pub exponent: f64,
    pub traj_min: Vec<f64>,
    pub traj_max: Vec<f64>,
    pub ic_min: Vec<f64>,
    pub ic_max: Vec<f64>,
}

/// Decoded values and how many entries had to be clamped at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded<D: Dimension> {
    pub values: Array<f64, D>,
    pub clamped: usize,
}

fn power(v: f64, exponent: f64) -> Result<f64> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::invalid("input", format!("power transform needs finite nonnegative values, got {v}")));
    }
    Ok(v.powf(exponent))
}

fn ranges<'a>(
    values: impl Iterator<Item = ArrayView2<'a, f64>>,
    p: usize,
    exponent: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for block in values {
        for row in block.rows() {
            for (j, &v) in row.iter().enumerate() {
                let t = power(v, exponent)?;
                lo[j] = lo[j].min(t);
                hi[j] = hi[j].max(t);
            }
        }
    }
    Ok((lo, hi))
}

impl NormStats {
    /// Fits trajectory ranges over every sample and time step of `train`
    /// and initial-condition ranges over `initials` (`[n][p]`).
    pub fn fit(
        variables: &[String],
        train: ArrayView3<'_, f64>,
        initials: ArrayView2<'_, f64>,
        exponent: f64,
    ) -> Result<Self> {
        let p = variables.len();
        if train.dim().2 != p || initials.dim().1 != p {
            return Err(Error::shape("fit_stats", "variable count differs from data"));
        }
        if train.dim().0 == 0 || train.dim().1 == 0 || initials.dim().0 == 0 {
            return Err(Error::invalid("training data", "cannot fit statistics on an empty set"));
        }
        if !(exponent > 0.0) || !exponent.is_finite() {
            return Err(Error::invalid("exponent", format!("must be positive, got {exponent}")));
        }
        let (traj_min, traj_max) = ranges(train.outer_iter(), p, exponent)?;
        let (ic_min, ic_max) = ranges(std::iter::once(initials), p, exponent)?;
        Ok(NormStats { variables: variables.to_vec(), exponent, traj_min, traj_max, ic_min, ic_max })
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    fn range(&self, which: Which) -> (&[f64], &[f64]) {
        match which {
            Which::Trajectory => (&self.traj_min, &self.traj_max),
            Which::Initial => (&self.ic_min, &self.ic_max),
        }
    }

    fn check_width<D: Dimension>(&self, x: &Array<f64, D>) -> Result<()> {
        if x.ndim() == 0 || x.shape()[x.ndim() - 1] != self.n_vars() {
            return Err(Error::shape("normalize", format!("array {:?} vs {} variables", x.shape(), self.n_vars())));
        }
        Ok(())
    }

    /// Power transform, then `2 (x̃ − min)/(max − min) − 1` along the last
    /// axis. Variables with `max = min` map to 0.
    pub fn encode<D: Dimension>(&self, x: &Array<f64, D>, which: Which) -> Result<Array<f64, D>> {
        self.check_width(x)?;
        let (lo, hi) = self.range(which);
        let mut out = x.clone();
        let last = Axis(out.ndim() - 1);
        for mut lane in out.lanes_mut(last) {
            for (j, v) in lane.iter_mut().enumerate() {
                let t = power(*v, self.exponent)?;
                let span = hi[j] - lo[j];
                *v = if span > 0.0 { 2.0 * (t - lo[j]) / span - 1.0 } else { 0.0 };
            }
        }
        Ok(out)
    }

    /// Inverse of [`NormStats::encode`]. Power-space values below zero are
    /// clamped to zero and counted.
    pub fn decode<D: Dimension>(&self, y: &Array<f64, D>, which: Which) -> Result<Decoded<D>> {
        self.check_width(y)?;
        let (lo, hi) = self.range(which);
        let inv = 1.0 / self.exponent;
        let mut clamped = 0;
        let mut out = y.clone();
        let last = Axis(out.ndim() - 1);
        for mut lane in out.lanes_mut(last) {
            for (j, v) in lane.iter_mut().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite("decode"));
                }
                let span = hi[j] - lo[j];
                let mut t = if span > 0.0 { (*v + 1.0) * 0.5 * span + lo[j] } else { lo[j] };
                if t < 0.0 {
                    t = 0.0;
                    clamped += 1;
                }
                *v = t.powf(inv);
            }
        }
        Ok(Decoded { values: out, clamped })
    }
}

/// Fixed-width decomposition of a series into windows sharing one boundary
/// point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowPlan {
    pub width: usize,
    pub segments: usize,
}

impl Default for WindowPlan {
    fn default() -> Self {
        WindowPlan { width: 101, segments: 99 }
    }
}

impl WindowPlan {
    pub fn stride(&self) -> usize {
        self.width - 1
    }

    /// Source points covered: `segments·(width − 1) + 1`.
    pub fn span(&self) -> usize {
        self.segments * self.stride() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 {
            return Err(Error::invalid("window.width", "must be at least 2"));
        }
        if self.segments < 1 {
            return Err(Error::invalid("window.segments", "must be at least 1"));
        }
        Ok(())
    }

    pub fn check_length(&self, n_t: usize) -> Result<()> {
        self.validate()?;
        if n_t < self.span() {
            return Err(Error::invalid(
                "window",
                format!(
                    "{} segments of width {} need {} time points, series has {n_t}",
                    self.segments,
                    self.width,
                    self.span()
                ),
            ));
        }
        Ok(())
    }
}

/// `[s][n_t][p]` → `[s·S][w][p]`; segment `i` of a sample covers indices
/// `[i(w−1), i(w−1) + w − 1]`. Points past the last segment are dropped.
pub fn time_decompose(x: ArrayView3<'_, f64>, plan: WindowPlan) -> Result<Array3<f64>> {
    let (n, n_t, p) = x.dim();
    plan.check_length(n_t)?;
    if n_t > plan.span() {
        log::debug!("time_decompose: dropping {} trailing points per sample", n_t - plan.span());
    }
    let (w, segs) = (plan.width, plan.segments);
    let mut out = Array3::zeros((n * segs, w, p));
    for i in 0..n {
        for k in 0..segs {
            let start = k * plan.stride();
            out.slice_mut(s![i * segs + k, .., ..]).assign(&x.slice(s![i, start..start + w, ..]));
        }
    }
    Ok(out)
}

/// First point of every window, `[s·S][p]`.
pub fn window_initials(x: ArrayView3<'_, f64>, plan: WindowPlan) -> Result<Array2<f64>> {
    let (n, n_t, p) = x.dim();
    plan.check_length(n_t)?;
    let mut out = Array2::zeros((n * plan.segments, p));
    for i in 0..n {
        for k in 0..plan.segments {
            out.row_mut(i * plan.segments + k).assign(&x.slice(s![i, k * plan.stride(), ..]));
        }
    }
    Ok(out)
}

/// `[s][p]` → `[s][w][p]` with every time index a copy of the row.
pub fn tile_initial(x0: ArrayView2<'_, f64>, w: usize) -> Array3<f64> {
    let (n, p) = x0.dim();
    Array3::from_shape_fn((n, w, p), |(i, _, j)| x0[[i, j]])
}

/// Like [`tile_initial`] with an extra trailing channel holding the
/// position in the window, scaled to `[−1, 1]`.
pub fn tile_initial_with_time(x0: ArrayView2<'_, f64>, w: usize) -> Array3<f64> {
    let (n, p) = x0.dim();
    let denom = (w.max(2) - 1) as f64;
    Array3::from_shape_fn((n, w, p + 1), |(i, t, j)| if j < p { x0[[i, j]] } else { 2.0 * t as f64 / denom - 1.0 })
}

/// `[s·S][w][p]` → `[s][S·w][p]` by plain concatenation; boundary points
/// shared by neighbouring windows appear twice.
pub fn reconstruct(segments: ArrayView3<'_, f64>, segs_per_sample: usize) -> Result<Array3<f64>> {
    let (m, w, p) = segments.dim();
    if segs_per_sample == 0 || m % segs_per_sample != 0 {
        return Err(Error::shape("reconstruct", format!("{m} segments not divisible by {segs_per_sample}")));
    }
    let n = m / segs_per_sample;
    let mut out = Array3::zeros((n, segs_per_sample * w, p));
    for i in 0..n {
        for k in 0..segs_per_sample {
            out.slice_mut(s![i, k * w..(k + 1) * w, ..]).assign(&segments.slice(s![i * segs_per_sample + k, .., ..]));
        }
    }
    Ok(out)
}

/// Source time index of each point of a reconstructed series.
pub fn reconstructed_indices(plan: WindowPlan) -> Vec<usize> {
    (0..plan.segments).flat_map(|k| (0..plan.width).map(move |t| k * plan.stride() + t)).collect()
}

/// Picks `indices` along the time axis of `[s][n_t][p]`.
pub fn gather_time(x: ArrayView3<'_, f64>, indices: &[usize]) -> Array3<f64> {
    x.select(Axis(1), indices)
}
