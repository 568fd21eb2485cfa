//! Selective state-space surrogates for stiff chemical kinetics.
//!
//! The crate covers the model ([`ssm`]), the data path from raw trajectories
//! to normalized windows ([`pipeline`], [`simplex`], [`pca`], [`regimes`]),
//! training ([`training`], [`checkpoint`]), inference ([`rollout`]) and
//! evaluation ([`metrics`]). [`variants`] ties them together behind a
//! name-keyed registry.

pub mod checkpoint;
pub mod dataset;
mod error;
pub mod linalg;
pub mod metrics;
pub mod pca;
pub mod pipeline;
pub mod regimes;
pub mod rollout;
pub mod simplex;
pub mod ssm;
pub mod training;
pub mod variants;

pub use checkpoint::Checkpoint;
pub use dataset::{Manifest, Split, TrajectoryDataset};
pub use error::{Error, ErrorKind, Result};
pub use variants::{ModelConfig, Registry, Surrogate, Variant};
