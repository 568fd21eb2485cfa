//! Percent relative L2 errors along time, per sample and variable.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clip {
    #[default]
    Off,
    /// Floor each denominator at `1e-3 ×` the mean over samples of the
    /// true signal's norm, per variable.
    Epsilon,
}

pub const CLIP_FACTOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub variables: Vec<String>,
    /// `[sample][variable]` percent errors.
    pub entries: Array2<f64>,
    pub per_variable: Vec<f64>,
    pub overall: f64,
    pub clip: Clip,
    /// Denominator floor per variable when clipping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
}

/// `100·‖pred − truth‖₂ / ‖truth‖₂` along the time axis of `[M][T][p]`
/// arrays. An unclipped zero denominator gives `+∞` unless the prediction
/// is exact there too.
pub fn rel_l2(
    pred: ArrayView3<'_, f64>,
    truth: ArrayView3<'_, f64>,
    variables: &[String],
    clip: Clip,
) -> Result<ErrorReport> {
    if pred.dim() != truth.dim() {
        return Err(Error::shape("rel_l2", format!("prediction {:?} vs truth {:?}", pred.dim(), truth.dim())));
    }
    let (m, _, p) = truth.dim();
    if variables.len() != p {
        return Err(Error::shape("rel_l2", "variable names do not match the data"));
    }
    let mut num = Array2::zeros((m, p));
    let mut den = Array2::zeros((m, p));
    for j in 0..m {
        for (t_row, p_row) in truth.index_axis(Axis(0), j).rows().into_iter().zip(pred.index_axis(Axis(0), j).rows()) {
            for i in 0..p {
                let diff = p_row[i] - t_row[i];
                num[[j, i]] += diff * diff;
                den[[j, i]] += t_row[i] * t_row[i];
            }
        }
    }
    num.mapv_inplace(f64::sqrt);
    den.mapv_inplace(f64::sqrt);

    let epsilon = match clip {
        Clip::Off => None,
        Clip::Epsilon => Some(
            (0..p)
                .map(|i| if m == 0 { 0.0 } else { CLIP_FACTOR * den.column(i).sum() / m as f64 })
                .collect::<Vec<f64>>(),
        ),
    };
    let mut entries = Array2::zeros((m, p));
    for j in 0..m {
        for i in 0..p {
            let d = match &epsilon {
                Some(eps) => den[[j, i]].max(eps[i]),
                None => den[[j, i]],
            };
            let n = num[[j, i]];
            entries[[j, i]] = if n == 0.0 {
                0.0
            } else if d == 0.0 {
                f64::INFINITY
            } else {
                100.0 * n / d
            };
        }
    }
    let (per_variable, overall) = aggregate(entries.view());
    Ok(ErrorReport { variables: variables.to_vec(), entries, per_variable, overall, clip, epsilon })
}

/// Means over samples per variable, and the grand mean.
pub fn aggregate(entries: ArrayView2<'_, f64>) -> (Vec<f64>, f64) {
    let (m, p) = entries.dim();
    if m == 0 || p == 0 {
        return (vec![f64::NAN; p], f64::NAN);
    }
    let per: Vec<f64> = (0..p).map(|i| entries.column(i).sum() / m as f64).collect();
    let overall = entries.sum() / (m * p) as f64;
    (per, overall)
}

impl ErrorReport {
    /// One row per `(sample, variable)` entry.
    pub fn entries_csv(&self) -> String {
        let mut out = String::from("sample,variable,error_percent\n");
        for (j, row) in self.entries.rows().into_iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                writeln!(out, "{j},{},{v}", self.variables[i]).expect("write to string");
            }
        }
        out
    }

    /// Per-variable means followed by the overall mean.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variable,mean_error_percent\n");
        for (name, v) in self.variables.iter().zip(&self.per_variable) {
            writeln!(out, "{name},{v}").expect("write to string");
        }
        writeln!(out, "overall,{}", self.overall).expect("write to string");
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
