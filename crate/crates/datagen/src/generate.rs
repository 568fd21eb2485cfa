use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use stiffssm_core::dataset::{Manifest, Split};
use stiffssm_core::{Error, Result, TrajectoryDataset};

use crate::mechanism::Mechanism;
use crate::rodas::{Rodas4, Tolerances};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub n_samples: usize,
    pub n_t: usize,
    pub dt: f64,
    pub seed: u64,
    pub split: Split,
    pub tol: Tolerances,
}

/// Trajectory `[n_t][p]` (row-major) sampled at `t = 0, dt, …, (n_t − 1)·dt`,
/// clamped nonnegative.
pub fn simulate(m: &dyn Mechanism, ic: &[f64], n_t: usize, dt: f64, tol: Tolerances) -> Result<Vec<f64>> {
    if ic.len() != m.dim() {
        return Err(Error::shape("simulate", format!("{} initial values for {} variables", ic.len(), m.dim())));
    }
    m.check_initial(ic)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if n_t == 0 {
        return Err(Error::invalid("n_t", "must be at least 1"));
    }
    let times: Vec<f64> = (0..n_t).map(|k| k as f64 * dt).collect();
    let (mut out, stats) = Rodas4::with_tolerances(tol).integrate(m, ic, &times)?;
    log::debug!("{}: {} accepted, {} rejected steps", m.id(), stats.accepted, stats.rejected);
    for v in &mut out {
        *v = v.max(0.0);
    }
    Ok(out)
}

/// Draws `n_samples` initial conditions from one seeded stream, then
/// simulates them in parallel.
pub fn generate_dataset(m: &dyn Mechanism, opts: &GenerateOptions) -> Result<TrajectoryDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ics: Vec<Vec<f64>> = (0..opts.n_samples).map(|_| m.sample_initial(&mut rng)).collect();
    let p = m.dim();
    let rows = ics
        .par_iter()
        .enumerate()
        .map(|(i, ic)| {
            simulate(m, ic, opts.n_t, opts.dt, opts.tol).map_err(|e| match e {
                Error::Integrator { t, reason } => Error::Integrator { t, reason: format!("sample {i}: {reason}") },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let data = Array3::from_shape_vec((opts.n_samples, opts.n_t, p), rows.concat())
        .map_err(|e| Error::shape("generate_dataset", e.to_string()))?;
    let manifest = Manifest {
        n_samples: opts.n_samples,
        n_t: opts.n_t,
        dt: opts.dt,
        variables: m.variables(),
        units: m.units(),
        species: m.species(),
        mechanism: m.spec(),
        seed: Some(opts.seed),
        split: opts.split,
        layout: None,
    };
    TrajectoryDataset::new(manifest, data)
}
