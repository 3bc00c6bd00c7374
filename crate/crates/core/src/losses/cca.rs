use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::matkernel::{covariance, cross_covariance, inv_sqrt_from_eigen, sym_eig};

/// Floor applied to covariance eigenvalues before inversion. Kept far below
/// typical regularizers so it only guards rank-deficient batches.
const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct CcaOutput {
    pub value: f64,
    pub grad_x: DMatrix<f64>,
    pub grad_y: DMatrix<f64>,
    /// Canonical correlations (singular values of `T`), descending.
    pub correlations: Vec<f64>,
}

fn centered(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = a.column_mean();
    let mut c = a.clone();
    for mut col in c.column_iter_mut() {
        col -= &mean;
    }
    c
}

/// Total canonical correlation `sqrt(tr(TᵀT))` with
/// `T = Σxx^{-1/2} Σxy Σyy^{-1/2}` over regularized batch covariances, and its
/// exact gradient with respect to every latent entry. Larger is better.
pub fn cca_loss(zx: &DMatrix<f64>, zy: &DMatrix<f64>, reg: f64) -> Result<CcaOutput> {
    let (d, n) = zx.shape();
    if zy.ncols() != n {
        return Err(invalid(format!("views have {n} and {} samples", zy.ncols())));
    }
    if n <= d.max(zy.nrows()) {
        return Err(Error::IllConditioned(format!(
            "CCA batch of {n} samples is too small for latent dims ({d}, {})",
            zy.nrows()
        )));
    }
    if !(reg > 0.0) {
        return Err(invalid("CCA regularizer must be positive"));
    }
    let sxx = covariance(zx, reg)?;
    let syy = covariance(zy, reg)?;
    let sxy = cross_covariance(zx, zy)?;

    let ex = sym_eig(&sxx)?;
    let ey = sym_eig(&syy)?;
    let p = inv_sqrt_from_eigen(&ex, EIGEN_FLOOR)?;
    let q = inv_sqrt_from_eigen(&ey, EIGEN_FLOOR)?;
    let t = &p * &sxy * &q;
    let value = t.norm();

    let tt = t.transpose() * &t;
    let mut correlations: Vec<f64> = sym_eig(&tt)?.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    correlations.reverse();

    let (hx, hy) = (centered(zx), centered(zy));
    let scale = 1.0 / (n - 1) as f64;
    if value <= 0.0 {
        return Ok(CcaOutput { value, grad_x: DMatrix::zeros(d, n), grad_y: DMatrix::zeros(zy.nrows(), n), correlations });
    }
    // dF/dΣxy = P T Q / F, dF/dΣxx = -P T Tᵀ P / 2F, dF/dΣyy = -Q Tᵀ T Q / 2F
    let d_sxy = &p * &t * &q / value;
    let d_sxx = -(&p * (&t * t.transpose()) * &p) / (2.0 * value);
    let d_syy = -(&q * &tt * &q) / (2.0 * value);
    let grad_x = (&d_sxx * &hx * 2.0 + &d_sxy * &hy) * scale;
    let grad_y = (&d_syy * &hy * 2.0 + d_sxy.transpose() * &hx) * scale;
    Ok(CcaOutput { value, grad_x, grad_y, correlations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::{finite_difference, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn identical_views_reach_sqrt_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = random(4, 200, &mut rng);
        let out = cca_loss(&z, &z, 1e-10).unwrap();
        assert!((out.value - 2.0).abs() < 1e-6, "{}", out.value);
    }

    #[test]
    fn independent_views_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = cca_loss(&random(3, 20_000, &mut rng), &random(3, 20_000, &mut rng), 1e-4).unwrap();
        assert!(out.value < 0.15, "{}", out.value);
    }

    #[test]
    fn small_batch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random(5, 5, &mut rng);
        assert!(matches!(cca_loss(&z, &z, 1e-4), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn value_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let zx = random(3, 40, &mut rng);
            let zy = &zx * 0.5 + random(3, 40, &mut rng);
            let v = cca_loss(&zx, &zy, 1e-4).unwrap().value;
            assert!((0.0..=3f64.sqrt() + 1e-6).contains(&v));
        }
    }

    #[test]
    fn invariant_to_linear_map_of_one_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let zx = random(3, 100, &mut rng);
        let zy = &zx + random(3, 100, &mut rng);
        // well-conditioned A: identity plus a small perturbation
        let a = DMatrix::<f64>::identity(3, 3) + random(3, 3, &mut rng) * 0.2;
        let base = cca_loss(&zx, &zy, 1e-10).unwrap().value;
        let mapped = cca_loss(&(&a * &zx), &zy, 1e-10).unwrap().value;
        assert!((base - mapped).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let zx = random(5, 64, &mut rng);
        let zy = &zx * 0.8 + random(5, 64, &mut rng);
        let out = cca_loss(&zx, &zy, 1e-4).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..zx.len() {
            let g = finite_difference(
                |p| Ok(cca_loss(&DMatrix::from_column_slice(5, 64, p), &zy, 1e-4)?.value),
                zx.as_slice(),
                k,
                1e-5,
            )
            .unwrap();
            worst = worst.max(relative_error(out.grad_x.as_slice()[k], g));
        }
        for k in 0..zy.len() {
            let g = finite_difference(
                |p| Ok(cca_loss(&zx, &DMatrix::from_column_slice(5, 64, p), 1e-4)?.value),
                zy.as_slice(),
                k,
                1e-5,
            )
            .unwrap();
            worst = worst.max(relative_error(out.grad_y.as_slice()[k], g));
        }
        assert!(worst < 1e-4, "{worst}");
    }
}
