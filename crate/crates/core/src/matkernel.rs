//! Dense symmetric linear algebra: covariances, a cyclic Jacobi
//! eigensolver and PSD inverse square roots.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Default eigenvalue floor for [`inv_sqrt_psd`].
pub const DEFAULT_EIGEN_FLOOR: f64 = 1e-6;

const NEGATIVE_EIGEN_TOLERANCE: f64 = 1e-8;
const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition `M = V diag(λ) Vᵀ` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: DMatrix<f64>,
}

impl SymmetricEigen {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[k]);
        }
        scaled * self.eigenvectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_spectrum(|l| l)
    }
}

fn centered(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = a.column_mean();
    let mut c = a.clone();
    for mut col in c.column_iter_mut() {
        col -= &mean;
    }
    c
}

/// `(1/(N-1)) (A - mean_A)(B - mean_B)ᵀ` for views sharing `N` columns.
pub fn cross_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.ncols();
    if n != b.ncols() {
        return Err(invalid(format!("views have {n} and {} samples", b.ncols())));
    }
    if n < 2 {
        return Err(invalid("covariance needs at least 2 samples"));
    }
    Ok(centered(a) * centered(b).transpose() / (n - 1) as f64)
}

/// Covariance of a single view with `regularizer · I` added to the diagonal.
pub fn covariance(a: &DMatrix<f64>, regularizer: f64) -> Result<DMatrix<f64>> {
    if regularizer < 0.0 {
        return Err(invalid("covariance regularizer must be nonnegative"));
    }
    let mut c = cross_covariance(a, a)?;
    for i in 0..c.nrows() {
        c[(i, i)] += regularizer;
    }
    Ok(c)
}

/// Cyclic Jacobi eigensolver. The input is symmetrized as `(M + Mᵀ)/2`.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(invalid(format!("matrix must be square, got {}x{}", n, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sym_eig input".into()));
    }
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm();
    let off_norm = |a: &DMatrix<f64>| {
        let mut s = 0.0;
        for c in 0..n {
            for r in 0..n {
                if r != c {
                    s += a[(r, c)] * a[(r, c)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while scale > 0.0 && off_norm(&a) >= JACOBI_TOLERANCE * scale {
        if sweeps == JACOBI_MAX_SWEEPS {
            log::warn!("Jacobi eigensolver stopped after {sweeps} sweeps");
            break;
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| a[(i, i)]));
    let eigenvectors = v.select_columns(&order);
    Ok(SymmetricEigen { eigenvalues, eigenvectors })
}

/// `V diag(max(λ, floor))^{-1/2} Vᵀ` for a symmetric PSD matrix.
pub fn inv_sqrt_psd(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    Ok(inv_sqrt_from_eigen(&sym_eig(m)?, floor)?)
}

pub(crate) fn inv_sqrt_from_eigen(eig: &SymmetricEigen, floor: f64) -> Result<DMatrix<f64>> {
    if floor <= 0.0 {
        return Err(invalid("eigenvalue floor must be positive"));
    }
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVE_EIGEN_TOLERANCE {
        return Err(Error::NotPsd(min));
    }
    Ok(eig.map_spectrum(|l| 1.0 / l.max(floor).sqrt()))
}
