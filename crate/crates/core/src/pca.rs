//! Truncated principal-component basis of initial conditions.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaBasis {
    /// Training mean, `[p]`.
    pub mean: Vec<f64>,
    /// Leading eigenvectors as columns, `[p][d]`.
    pub components: Array2<f64>,
    /// All `p` covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Centers `x0` (`[n][p]`), forms the sample covariance and keeps the `d`
/// eigenvectors with the largest eigenvalues. Each eigenvector is signed so
/// that its largest-magnitude entry is positive.
pub fn fit_pca(x0: ArrayView2<'_, f64>, d: usize) -> Result<PcaBasis> {
    let (n, p) = x0.dim();
    if n < 2 {
        return Err(Error::invalid("pca", format!("need at least 2 samples, got {n}")));
    }
    if d == 0 || d > p {
        return Err(Error::invalid("pca.latent_dim", format!("must be in 1..={p}, got {d}")));
    }
    let mean = x0.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x0 - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let sym = DMatrix::from_fn(p, p, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..p).collect();
    // stable sort keeps the solver's order among equal eigenvalues
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut components = Array2::zeros((p, d));
    for (c, &k) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = (0..p).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            components[[i, c]] = sign * v[i];
        }
    }
    // round-off can leave tiny negative eigenvalues on rank-deficient data
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    Ok(PcaBasis { mean: mean.to_vec(), components, eigenvalues })
}

impl PcaBasis {
    pub fn n_vars(&self) -> usize {
        self.mean.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.components.dim().1
    }

    /// `(x − mean) · V_r` for each row of `[n][p]`.
    pub fn project(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.dim().1 != self.n_vars() {
            return Err(Error::shape("pca.project", format!("{} columns, basis has {}", x.dim().1, self.n_vars())));
        }
        let mean = ArrayView1::from(&self.mean);
        Ok((&x - &mean).dot(&self.components))
    }

    pub fn project_one(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let row = x.insert_axis(Axis(0));
        Ok(self.project(row)?.row(0).to_owned())
    }

    /// `mean + z · V_rᵀ`, the least-squares inverse of [`PcaBasis::project`].
    pub fn embed(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if z.dim().1 != self.latent_dim() {
            return Err(Error::shape("pca.embed", "latent width differs from basis"));
        }
        Ok(z.dot(&self.components.t()) + ArrayView1::from(&self.mean))
    }

    /// Fraction of total variance captured by the first `k` components.
    pub fn explained(&self, k: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total == 0.0 {
            return 1.0;
        }
        self.eigenvalues.iter().take(k).sum::<f64>() / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_example() {
        let b = fit_pca(array![[1.0, 0.0], [-1.0, 0.0]].view(), 1).unwrap();
        assert_eq!(b.mean, vec![0.0, 0.0]);
        assert!((b.components[[0, 0]] - 1.0).abs() < 1e-15);
        assert!(b.components[[1, 0]].abs() < 1e-15);
        assert!((b.eigenvalues[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(fit_pca(x.view(), 0).is_err());
        assert!(fit_pca(x.view(), 3).is_err());
        assert!(fit_pca(array![[1.0, 2.0]].view(), 1).is_err());
    }

    #[test]
    fn mean_projects_to_origin() {
        let x = array![[1.0, 2.0, 0.5], [0.3, -1.0, 2.0], [2.0, 0.0, 1.0], [0.1, 0.2, 0.3]];
        let b = fit_pca(x.view(), 2).unwrap();
        let z = b.project_one(ArrayView1::from(&b.mean)).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-15));
    }
}
