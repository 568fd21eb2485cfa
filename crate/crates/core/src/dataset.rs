//! Trajectory datasets and their on-disk directory format.
//!
//! A dataset directory holds `manifest.json` and `data.bin`, the latter a
//! headerless row-major `[sample][time][variable]` array of little-endian
//! `f64`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Extrapolation,
}

/// How the time axis of a stored array relates to the source trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Layout {
    /// `segments` concatenated windows of `width` points each.
    Decomposed { width: usize, segments: usize },
    /// Windows of the listed lengths, each seeded by the previous one.
    Rollout { windows: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub n_samples: usize,
    pub n_t: usize,
    /// Output time step in seconds.
    pub dt: f64,
    pub variables: Vec<String>,
    pub units: Vec<String>,
    /// Variables forming the mass-fraction block, in state order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub species: Vec<String>,
    #[serde(default)]
    pub mechanism: serde_json::Value,
    #[serde(default)]
    pub seed: Option<u64>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<Layout>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("manifest.dt", format!("must be positive, got {}", self.dt)));
        }
        let mut seen = HashSet::new();
        for v in &self.variables {
            if !seen.insert(v.as_str()) {
                return Err(Error::invalid("manifest.variables", format!("duplicate name `{v}`")));
            }
        }
        if self.units.len() != self.variables.len() {
            return Err(Error::invalid(
                "manifest.units",
                format!("{} units for {} variables", self.units.len(), self.variables.len()),
            ));
        }
        for s in &self.species {
            if !seen.contains(s.as_str()) {
                return Err(Error::invalid("manifest.species", format!("`{s}` is not a variable")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub manifest: Manifest,
    pub data: Array3<f64>,
}

impl TrajectoryDataset {
    pub fn new(manifest: Manifest, data: Array3<f64>) -> Result<Self> {
        manifest.validate()?;
        let want = (manifest.n_samples, manifest.n_t, manifest.variables.len());
        if data.dim() != want {
            return Err(Error::shape("dataset", format!("array {:?} vs manifest {:?}", data.dim(), want)));
        }
        Ok(TrajectoryDataset { manifest, data })
    }

    pub fn n_samples(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_t(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_vars(&self) -> usize {
        self.data.dim().2
    }

    pub fn variables(&self) -> &[String] {
        &self.manifest.variables
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.manifest
            .variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::invalid("variable", format!("dataset has no variable `{name}`")))
    }

    /// Column indices of the mass-fraction block.
    pub fn species_columns(&self) -> Result<Vec<usize>> {
        self.manifest.species.iter().map(|s| self.column(s)).collect()
    }

    /// `[sample][variable]` values at time index 0.
    pub fn initial_conditions(&self) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(1), 0)
    }

    /// Copy restricted to the given samples, in the given order.
    pub fn select(&self, samples: &[usize]) -> Self {
        let data = self.data.select(Axis(0), samples);
        let mut manifest = self.manifest.clone();
        manifest.n_samples = samples.len();
        TrajectoryDataset { manifest, data }
    }

    /// Same metadata with a replacement array (sample count and time length
    /// follow the array).
    pub fn with_data(&self, data: Array3<f64>) -> Result<Self> {
        let mut manifest = self.manifest.clone();
        manifest.n_samples = data.dim().0;
        manifest.n_t = data.dim().1;
        TrajectoryDataset::new(manifest, data)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join(MANIFEST_FILE);
        let mut text =
            serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        text.push('\n');
        fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
        let data_path = dir.join(DATA_FILE);
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for v in self.data.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        manifest.validate().map_err(|e| Error::format(&manifest_path, e.to_string()))?;
        let data_path = dir.join(DATA_FILE);
        let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        let shape = (manifest.n_samples, manifest.n_t, manifest.variables.len());
        let expected = shape.0 * shape.1 * shape.2 * 8;
        if bytes.len() != expected {
            return Err(Error::format(
                &data_path,
                format!("length mismatch: manifest implies {expected} bytes, found {}", bytes.len()),
            ));
        }
        let values: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        let data = Array3::from_shape_vec(shape, values).expect("length checked");
        Ok(TrajectoryDataset { manifest, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn manifest(n: usize, n_t: usize, vars: &[&str]) -> Manifest {
        Manifest {
            n_samples: n,
            n_t,
            dt: 1e-3,
            variables: vars.iter().map(|s| s.to_string()).collect(),
            units: vars.iter().map(|_| "-".to_string()).collect(),
            species: vec![],
            mechanism: serde_json::Value::Null,
            seed: None,
            split: Split::Train,
            layout: None,
        }
    }

    #[test]
    fn rejects_duplicate_names_and_bad_dt() {
        let mut m = manifest(1, 2, &["a", "a"]);
        assert!(m.validate().is_err());
        m.variables[1] = "b".into();
        m.validate().unwrap();
        m.dt = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn shape_must_match_manifest() {
        let m = manifest(2, 3, &["a"]);
        assert!(TrajectoryDataset::new(m.clone(), Array3::zeros((2, 3, 2))).is_err());
        TrajectoryDataset::new(m, Array3::zeros((2, 3, 1))).unwrap();
    }

    #[test]
    fn select_reorders_samples() {
        let m = manifest(3, 1, &["a"]);
        let ds = TrajectoryDataset::new(m, Array3::from_shape_fn((3, 1, 1), |(i, _, _)| i as f64)).unwrap();
        let sub = ds.select(&[2, 0]);
        assert_eq!(sub.manifest.n_samples, 2);
        assert_eq!(sub.data[[0, 0, 0]], 2.0);
        assert_eq!(sub.data[[1, 0, 0]], 0.0);
    }
}
