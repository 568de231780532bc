use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal axes of a training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm principal directions, most variance first.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component (N − 1 denominator), nonincreasing.
    pub explained_variance: Vec<f64>,
}

/// Sample covariance (N − 1 denominator) of a row-major matrix.
pub fn covariance(values: &[f64], rows: usize, cols: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if rows < 2 {
        return Err(Error::InsufficientData("PCA needs at least two rows".into()));
    }
    if values.len() != rows * cols || cols == 0 {
        return Err(Error::SchemaMismatch("matrix shape".into()));
    }
    let mut mean = vec![0.0; cols];
    for r in 0..rows {
        for c in 0..cols {
            mean[c] += values[r * cols + c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let centered = DMatrix::from_fn(rows, cols, |r, c| values[r * cols + c] - mean[c]);
    let cov = (centered.transpose() * &centered) / (rows as f64 - 1.0);
    Ok((mean, cov))
}

/// Eigendecomposition of the sample covariance. Directions whose variance is
/// numerically zero are dropped, so rank-deficient inputs yield fewer components.
pub fn pca_fit(values: &[f64], rows: usize, cols: usize) -> Result<Pca> {
    let (mean, cov) = covariance(values, rows, cols)?;
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let tol = 1e-12 * trace.abs().max(f64::MIN_POSITIVE);
    let mut components = Vec::new();
    let mut explained_variance = Vec::new();
    for i in order {
        let lambda = eig.eigenvalues[i];
        if lambda <= tol {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        // sign convention: largest-magnitude entry positive
        let pivot = (0..v.len())
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap_or(0);
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(lambda);
    }
    Ok(Pca {
        mean,
        components,
        explained_variance,
    })
}

impl Pca {
    pub fn explained_ratio(&self) -> Vec<f64> {
        let total: f64 = self.explained_variance.iter().sum();
        self.explained_variance.iter().map(|v| v / total).collect()
    }

    /// Coordinates of each row on the first `k` components.
    pub fn project(&self, values: &[f64], rows: usize, cols: usize, k: usize) -> Result<Vec<Vec<f64>>> {
        if cols != self.mean.len() || values.len() != rows * cols {
            return Err(Error::SchemaMismatch("projection input width".into()));
        }
        let k = k.min(self.components.len());
        Ok((0..rows)
            .map(|r| {
                let x = &values[r * cols..(r + 1) * cols];
                self.components[..k]
                    .iter()
                    .map(|comp| comp.iter().zip(x).zip(&self.mean).map(|((w, v), m)| w * (v - m)).sum())
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn collinear_data_is_rank_one() {
        let vals: Vec<f64> = (0..50).flat_map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
        let p = pca_fit(&vals, 50, 2).unwrap();
        assert!(p.explained_ratio()[0] >= 0.999);
        assert_eq!(p.components.len(), 1);
    }

    /// Real roots of the characteristic cubic of a symmetric 3×3 matrix
    /// (trigonometric solution).
    fn cubic_eigenvalues(a: &DMatrix<f64>) -> [f64; 3] {
        let p1 = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        let q = a.trace() / 3.0;
        let p2 = (a[(0, 0)] - q).powi(2) + (a[(1, 1)] - q).powi(2) + (a[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (a - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    }

    #[test]
    fn variances_match_characteristic_polynomial_oracle() {
        let mut rng = rng_from_seed(4);
        for _ in 0..20 {
            let rows = 40;
            let vals: Vec<f64> = (0..rows)
                .flat_map(|_| {
                    let a: f64 = rng.random_range(-1.0..1.0);
                    [a, a * 0.5 + rng.random_range(-0.3..0.3), rng.random_range(-2.0..2.0)]
                })
                .collect();
            let (_, cov) = covariance(&vals, rows, 3).unwrap();
            let oracle = cubic_eigenvalues(&cov);
            let p = pca_fit(&vals, rows, 3).unwrap();
            for (got, want) in p.explained_variance.iter().zip(oracle) {
                assert!((got - want).abs() < 1e-8, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn projection_of_training_mean_is_origin() {
        let vals = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let p = pca_fit(&vals, 4, 2).unwrap();
        let proj = p.project(&p.mean, 1, 2, 2).unwrap();
        assert!(proj[0].iter().all(|x| x.abs() < 1e-12));
        assert!(pca_fit(&vals[..2], 1, 2).is_err());
    }
}
