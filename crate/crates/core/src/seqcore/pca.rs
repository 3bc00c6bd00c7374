use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::matkernel::{covariance, sym_eig};

/// Principal component projection fitted on column samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `retained × input_dim`, orthonormal rows, decreasing variance.
    pub basis: DMatrix<f64>,
    /// Variance captured by each retained component.
    pub variances: DVector<f64>,
    pub total_variance: f64,
}

impl PcaModel {
    pub fn retained(&self) -> usize {
        self.basis.nrows()
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.variances.sum() / self.total_variance
    }

    /// Maps projected coordinates back to the input space.
    pub fn reconstruct(&self, projected: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.basis.transpose() * projected;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }
}

/// Fits PCA on `samples` (`input_dim × n`, one sample per column).
pub fn pca_fit(samples: &DMatrix<f64>, retained: usize) -> Result<PcaModel> {
    let (dim, n) = samples.shape();
    if n < 2 {
        return Err(invalid("PCA needs at least 2 samples"));
    }
    if retained == 0 || retained > (n - 1).min(dim) {
        return Err(invalid(format!(
            "cannot retain {retained} components from {n} samples of dim {dim}"
        )));
    }
    let cov = covariance(samples, 0.0)?;
    let eig = sym_eig(&cov)?;
    let mut basis = DMatrix::zeros(retained, dim);
    let mut variances = DVector::zeros(retained);
    for k in 0..retained {
        let src = dim - 1 - k;
        basis.row_mut(k).copy_from(&eig.eigenvectors.column(src).transpose());
        variances[k] = eig.eigenvalues[src].max(0.0);
    }
    Ok(PcaModel {
        mean: samples.column_mean(),
        basis,
        variances,
        total_variance: cov.trace(),
    })
}

/// Centers `x` with the model mean and projects onto the retained basis.
pub fn pca_apply(model: &PcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != model.mean.len() {
        return Err(invalid(format!(
            "PCA fitted on dim {} applied to dim {}",
            model.mean.len(),
            x.nrows()
        )));
    }
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &model.mean;
    }
    Ok(&model.basis * centered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn collinear_data_single_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dir = [0.6, -0.8, 0.0];
        let t: Vec<f64> = (0..100).map(|c| c as f64 * 0.1 + rng.random::<f64>()).collect();
        let x = DMatrix::from_fn(3, 100, |r, c| dir[r] * t[c] + 2.0);
        let m = pca_fit(&x, 1).unwrap();
        assert!(m.explained_variance_ratio() >= 1.0 - 1e-10);
        let b = m.basis.row(0);
        assert!((b[0] * dir[0] + b[1] * dir[1]).abs() > 1.0 - 1e-10);
    }

    #[test]
    fn isotropic_gaussian_eigenvalues_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(2, 10_000, &mut rng);
        let m = pca_fit(&x, 2).unwrap();
        let (big, small) = (m.variances[0], m.variances[1]);
        assert!(big >= small);
        assert!((big - small) / big < 0.15, "{big} vs {small}");
    }

    #[test]
    fn full_rank_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(4, 30, &mut rng);
        let m = pca_fit(&x, 4).unwrap();
        let back = m.reconstruct(&pca_apply(&m, &x).unwrap());
        assert!((back - &x).amax() < 1e-8);
    }

    #[test]
    fn full_rank_preserves_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(5, 40, &mut rng);
        let m = pca_fit(&x, 5).unwrap();
        let p = pca_apply(&m, &x).unwrap();
        let mut c = x.clone();
        for mut col in c.column_iter_mut() {
            col -= &m.mean;
        }
        let g1 = c.transpose() * &c;
        let g2 = p.transpose() * &p;
        assert!((g1 - g2).amax() < 1e-8);
    }

    #[test]
    fn basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = pca_fit(&random(6, 50, &mut rng), 4).unwrap();
        let g = &m.basis * m.basis.transpose();
        assert!((g - DMatrix::<f64>::identity(4, 4)).amax() < 1e-8);
    }

    #[test]
    fn rank_bound_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(pca_fit(&random(5, 4, &mut rng), 4).is_err());
        assert!(pca_fit(&random(3, 10, &mut rng), 4).is_err());
        assert!(pca_fit(&random(3, 10, &mut rng), 0).is_err());
    }
}
