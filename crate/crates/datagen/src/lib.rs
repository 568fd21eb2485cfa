//! Ground-truth trajectories from stiff kinetic mechanisms.
//!
//! [`mechanism`] defines the right-hand sides and their analytic Jacobians,
//! [`rodas`] integrates them with an adaptive Rosenbrock method, and
//! [`generate`] samples initial conditions and writes whole datasets.

pub mod generate;
pub mod mechanism;
pub mod rodas;

pub use generate::{generate_dataset, simulate, GenerateOptions};
pub use mechanism::{Mechanism, MechanismRegistry, OneStepIgnition, Range, Robertson};
pub use rodas::{Rodas4, Tolerances};
