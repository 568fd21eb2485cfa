//! Inference drivers: time-decomposed, recursive, adaptive and latent
//! rollouts, plus per-window error reports.
//!
//! Predictors work in physical units; each model handles its own
//! normalization.

use std::cell::RefCell;
use std::fmt::Write as _;

use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{rel_l2, Clip};
use crate::pca::PcaBasis;
use crate::pipeline::{reconstruct, window_initials, WindowPlan};

/// Predicts whole windows from their initial states.
pub trait WindowPredictor {
    fn n_vars(&self) -> usize;

    /// `ics` holds the first state of each window and `origins` the initial
    /// state of the trajectory each window belongs to (both `[n][p]`).
    /// Returns `[n][width][p]`.
    fn predict(&self, ics: ArrayView2<'_, f64>, origins: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>>;
}

/// Checked single call of a predictor.
pub fn predict_windows(
    model: &dyn WindowPredictor,
    ics: ArrayView2<'_, f64>,
    origins: ArrayView2<'_, f64>,
    width: usize,
) -> Result<Array3<f64>> {
    let (n, p) = ics.dim();
    if p != model.n_vars() || origins.dim() != ics.dim() {
        return Err(Error::shape(
            "predict_windows",
            format!("initial states {:?}, origins {:?}, model width {}", ics.dim(), origins.dim(), model.n_vars()),
        ));
    }
    let out = model.predict(ics, origins, width)?;
    if out.dim() != (n, width, p) {
        return Err(Error::shape("predict_windows", format!("model returned {:?}", out.dim())));
    }
    Ok(out)
}

/// Predicts every window of `truth` (`[n][n_t][p]`) from its true initial
/// state and concatenates the windows (`[n][S·w][p]`).
pub fn time_decomposed(
    model: &dyn WindowPredictor,
    truth: ArrayView3<'_, f64>,
    plan: WindowPlan,
) -> Result<Array3<f64>> {
    let ics = window_initials(truth, plan)?;
    let origins = repeat_rows(truth.index_axis(Axis(1), 0), plan.segments);
    let pred = predict_windows(model, ics.view(), origins.view(), plan.width)?;
    reconstruct(pred.view(), plan.segments)
}

fn repeat_rows(x: ArrayView2<'_, f64>, times: usize) -> Array2<f64> {
    let (n, p) = x.dim();
    Array2::from_shape_fn((n * times, p), |(r, j)| x[[r / times, j]])
}

/// Ordered window lengths of a rollout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutPlan {
    pub windows: Vec<usize>,
}

impl RolloutPlan {
    pub fn fixed(width: usize, count: usize) -> Self {
        RolloutPlan { windows: vec![width; count] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() {
            return Err(Error::invalid("rollout.windows", "plan is empty"));
        }
        if let Some(w) = self.windows.iter().find(|&&w| w < 2) {
            return Err(Error::invalid("rollout.windows", format!("window length {w} is below 2")));
        }
        Ok(())
    }

    /// Total predicted points, `Σ wᵢ`.
    pub fn total(&self) -> usize {
        self.windows.iter().sum()
    }

    /// Source index of each window's first point; window `k + 1` starts on
    /// the last point of window `k`.
    pub fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.windows.len());
        let mut at = 0;
        for &w in &self.windows {
            o.push(at);
            at += w - 1;
        }
        o
    }

    /// Source points covered.
    pub fn span(&self) -> usize {
        self.offsets().last().map_or(0, |o| o + self.windows.last().copied().unwrap_or(0))
    }

    /// Source index of every predicted point.
    pub fn source_indices(&self) -> Vec<usize> {
        self.offsets().into_iter().zip(&self.windows).flat_map(|(o, &w)| o..o + w).collect()
    }
}

impl From<WindowPlan> for RolloutPlan {
    fn from(p: WindowPlan) -> Self {
        RolloutPlan::fixed(p.width, p.segments)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `[n][Σw][p]`.
    pub values: Array3<f64>,
    pub plan: RolloutPlan,
    /// `[n][window]`: largest absolute change between a window's seed and
    /// its first predicted point.
    pub seed_jumps: Array2<f64>,
}

fn run(
    model: &dyn WindowPredictor,
    origins: ArrayView2<'_, f64>,
    plan: &RolloutPlan,
    mut seed_for: impl FnMut(usize, Option<&Array3<f64>>) -> Array2<f64>,
) -> Result<Rollout> {
    plan.validate()?;
    let (n, p) = origins.dim();
    let mut values = Array3::zeros((n, plan.total(), p));
    let mut seed_jumps = Array2::zeros((n, plan.windows.len()));
    let mut prev: Option<Array3<f64>> = None;
    let mut at = 0;
    for (k, &w) in plan.windows.iter().enumerate() {
        let seeds = seed_for(k, prev.as_ref());
        let pred = match predict_windows(model, seeds.view(), origins, w) {
            Err(Error::NonFinite(_)) | Err(Error::Tensor(stiffssm_tensor::TensorError::NonFinite { .. })) => {
                return Err(Error::NonFinitePrediction { window: k })
            }
            r => r?,
        };
        if pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinitePrediction { window: k });
        }
        for i in 0..n {
            seed_jumps[[i, k]] = (0..p).fold(0.0_f64, |m, j| m.max((pred[[i, 0, j]] - seeds[[i, j]]).abs()));
        }
        values.slice_mut(s![.., at..at + w, ..]).assign(&pred);
        at += w;
        prev = Some(pred);
    }
    Ok(Rollout { values, plan: plan.clone(), seed_jumps })
}

/// Seeds window 1 with `ic0` (`[n][p]`) and each later window with the last
/// predicted point of the previous one.
pub fn recursive_rollout(model: &dyn WindowPredictor, ic0: ArrayView2<'_, f64>, plan: &RolloutPlan) -> Result<Rollout> {
    run(model, ic0, plan, |_, prev| match prev {
        None => ic0.to_owned(),
        Some(p) => p.index_axis(Axis(1), p.dim().1 - 1).to_owned(),
    })
}

/// Seeds every window from the true state at its source offset.
pub fn teacher_forced_rollout(
    model: &dyn WindowPredictor,
    truth: ArrayView3<'_, f64>,
    plan: &RolloutPlan,
) -> Result<Rollout> {
    plan.validate()?;
    check_span(truth, plan)?;
    let offsets = plan.offsets();
    run(model, truth.index_axis(Axis(1), 0), plan, |k, _| truth.index_axis(Axis(1), offsets[k]).to_owned())
}

fn check_span(truth: ArrayView3<'_, f64>, plan: &RolloutPlan) -> Result<()> {
    if truth.dim().1 < plan.span() {
        return Err(Error::invalid(
            "rollout",
            format!("plan covers {} source points, truth has {}", plan.span(), truth.dim().1),
        ));
    }
    Ok(())
}

/// Truth at the source index of every rollout point, `[n][Σw][p]`.
pub fn aligned_truth(truth: ArrayView3<'_, f64>, plan: &RolloutPlan) -> Result<Array3<f64>> {
    check_span(truth, plan)?;
    Ok(truth.select(Axis(1), &plan.source_indices()))
}

/// A model whose inputs are principal-component scores.
pub trait LatentWindowPredictor {
    fn basis(&self) -> &PcaBasis;

    /// Maps physical states into the coordinates the basis was fitted in.
    fn to_basis_space(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>>;

    /// Full-space physical windows from latent scores `[n][d]`.
    fn predict_latent(&self, z: ArrayView2<'_, f64>, origins: ArrayView2<'_, f64>, width: usize)
        -> Result<Array3<f64>>;
}

/// Adapts a latent model to full-space seeds by projecting them first.
pub struct Projected<'a, L: ?Sized>(pub &'a L);

impl<L: LatentWindowPredictor + ?Sized> WindowPredictor for Projected<'_, L> {
    fn n_vars(&self) -> usize {
        self.0.basis().n_vars()
    }

    fn predict(&self, ics: ArrayView2<'_, f64>, origins: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>> {
        let z = self.0.basis().project(self.0.to_basis_space(ics)?.view())?;
        self.0.predict_latent(z.view(), origins, width)
    }
}

/// Recursive rollout where each seed is the previous window's last
/// full-space prediction, projected onto the latent basis.
pub fn latent_recursive_rollout<L: LatentWindowPredictor + ?Sized>(
    model: &L,
    ic0: ArrayView2<'_, f64>,
    plan: &RolloutPlan,
) -> Result<Rollout> {
    recursive_rollout(&Projected(model), ic0, plan)
}

/// Oracle that answers every window with the stored ground truth.
///
/// Each request is matched to the trajectory with the same initial state
/// and to the time index holding the window's seed; a per-trajectory cursor
/// prefers the continuation of the previous window when values repeat.
pub struct TruthLookup {
    truth: Array3<f64>,
    cursor: RefCell<Vec<usize>>,
}

impl TruthLookup {
    pub fn new(truth: Array3<f64>) -> Self {
        let n = truth.dim().0;
        TruthLookup { truth, cursor: RefCell::new(vec![0; n]) }
    }

    pub fn reset(&self) {
        self.cursor.borrow_mut().fill(0);
    }

    fn find(&self, ic: ndarray::ArrayView1<'_, f64>, origin: ndarray::ArrayView1<'_, f64>) -> Option<(usize, usize)> {
        let (n, n_t, _) = self.truth.dim();
        let cursor = self.cursor.borrow();
        let matches = |j: usize, t: usize| self.truth.slice(s![j, t, ..]) == ic;
        (0..n).filter(|&j| self.truth.slice(s![j, 0, ..]) == origin).find_map(|j| {
            let c = cursor[j];
            if c < n_t && matches(j, c) {
                Some((j, c))
            } else {
                (0..n_t).find(|&t| matches(j, t)).map(|t| (j, t))
            }
        })
    }
}

impl WindowPredictor for TruthLookup {
    fn n_vars(&self) -> usize {
        self.truth.dim().2
    }

    fn predict(&self, ics: ArrayView2<'_, f64>, origins: ArrayView2<'_, f64>, width: usize) -> Result<Array3<f64>> {
        let (n, p) = ics.dim();
        let n_t = self.truth.dim().1;
        let mut out = Array3::zeros((n, width, p));
        for r in 0..n {
            let (j, t) = self
                .find(ics.row(r), origins.row(r))
                .ok_or_else(|| Error::invalid("oracle", format!("window {r}: initial state not found in truth")))?;
            if t + width > n_t {
                return Err(Error::invalid("oracle", format!("window {r} runs past the end of the truth")));
            }
            out.slice_mut(s![r, .., ..]).assign(&self.truth.slice(s![j, t..t + width, ..]));
            self.cursor.borrow_mut()[j] = t + width - 1;
        }
        Ok(out)
    }
}

/// Error summary of one rollout window across trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowError {
    pub window: usize,
    /// Source index of the window's first point.
    pub start: usize,
    pub width: usize,
    /// Mean over trajectories of the percent relative L2 error, per variable.
    pub per_variable: Vec<f64>,
    pub mean: f64,
    pub max_seed_jump: f64,
    /// Trajectories whose seed jump exceeds the report threshold.
    pub flagged: usize,
}

pub fn window_report(
    rollout: &Rollout,
    truth: ArrayView3<'_, f64>,
    variables: &[String],
    jump_threshold: f64,
    clip: Clip,
) -> Result<Vec<WindowError>> {
    let offsets = rollout.plan.offsets();
    check_span(truth, &rollout.plan)?;
    let mut at = 0;
    let mut out = Vec::with_capacity(offsets.len());
    for (k, (&o, &w)) in offsets.iter().zip(&rollout.plan.windows).enumerate() {
        let pred = rollout.values.slice(s![.., at..at + w, ..]);
        let tru = truth.slice(s![.., o..o + w, ..]);
        let r = rel_l2(pred, tru, variables, clip)?;
        let jumps = rollout.seed_jumps.column(k);
        out.push(WindowError {
            window: k,
            start: o,
            width: w,
            per_variable: r.per_variable,
            mean: r.overall,
            max_seed_jump: jumps.fold(0.0_f64, |m, &v| m.max(v)),
            flagged: jumps.iter().filter(|&&v| v > jump_threshold).count(),
        });
        at += w;
    }
    Ok(out)
}

pub fn window_report_csv(report: &[WindowError], variables: &[String]) -> String {
    let mut out = String::from("window,start,width,mean_error_percent,max_seed_jump,flagged");
    for v in variables {
        write!(out, ",{v}").expect("write to string");
    }
    out.push('\n');
    for w in report {
        write!(out, "{},{},{},{},{},{}", w.window, w.start, w.width, w.mean, w.max_seed_jump, w.flagged)
            .expect("write to string");
        for v in &w.per_variable {
            write!(out, ",{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}
