//! Selective state-space model: discretization, scan, mixer block and
//! backbone.

mod backbone;
mod block;
mod params;
mod scan;
mod zoh;

pub use backbone::{Backbone, BackboneConfig, Norm};
pub use block::{mamba_block_forward, BlockDims, BlockVars};
pub use params::ParamSet;
pub use scan::{affine_scan, record_selective_scan, selective_scan, ScanMode};
pub use zoh::{zoh_discretize, Discretization};
