//! Mutual information between latent views estimated with leave-one-out
//! Gaussian kernel density estimates.
//!
//! All three densities (joint over the stacked `(z^x, z^y)`, and the two
//! marginals) use an isotropic kernel `N(0, σ² I)` with their own trainable
//! bandwidth. Densities are handled as log-densities throughout; the kernels
//! underflow in tens of dimensions otherwise.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

const MIN_BANDWIDTH: f64 = 1e-6;

/// Which form of the mutual information sum to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmiMode {
    /// `Σ_i p̂(z_i) log(p̂(z_i) / (p̂(z^x_i) p̂(z^y_i)))`, each term weighted by
    /// the joint density estimate.
    Literal,
    /// `(1/N) Σ_i log(p̂(z_i) / (p̂(z^x_i) p̂(z^y_i)))`.
    SampleMean,
}

impl std::str::FromStr for MmiMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "sample_mean" => Ok(Self::SampleMean),
            _ => Err(invalid(format!("unknown mmi mode `{s}` (literal | sample_mean)"))),
        }
    }
}

/// Kernel bandwidths stored as `log σ` for the joint and the two marginals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeBandwidths {
    pub log_sigma: [f64; 3],
}

impl KdeBandwidths {
    pub fn new(joint: f64, x: f64, y: f64) -> Result<Self> {
        if [joint, x, y].iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(invalid("bandwidths must be positive"));
        }
        Ok(Self { log_sigma: [joint.ln(), x.ln(), y.ln()] })
    }

    pub fn sigma(&self) -> [f64; 3] {
        self.log_sigma.map(f64::exp)
    }
}

impl Default for KdeBandwidths {
    fn default() -> Self {
        Self { log_sigma: [0.0; 3] }
    }
}

impl crate::net::Parameterized for KdeBandwidths {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.log_sigma]
    }
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.log_sigma]
    }
}

#[derive(Debug, Clone)]
pub struct MmiOutput {
    pub value: f64,
    pub grad_x: DMatrix<f64>,
    pub grad_y: DMatrix<f64>,
    /// Gradient with respect to `log σ` (joint, x, y).
    pub grad_log_bw: [f64; 3],
}

/// Leave-one-out KDE at every sample of `z` (`dim × n`).
struct Loo {
    log_density: Vec<f64>,
    /// Row-normalized leave-one-out kernel weights `w_ij / Σ_{l≠i} w_il`.
    weights: DMatrix<f64>,
    sq_dist: DMatrix<f64>,
    sigma: f64,
    dim: usize,
}

fn sq_distances(z: &DMatrix<f64>) -> DMatrix<f64> {
    // |z_i|² + |z_j|² - 2 z_i·z_j from the Gram matrix
    let gram = z.transpose() * z;
    let n = z.ncols();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0) })
}

fn clamp_sigma(log_sigma: f64) -> f64 {
    let sigma = log_sigma.exp();
    if sigma < MIN_BANDWIDTH {
        log::warn!("KDE bandwidth {sigma:e} clamped to {MIN_BANDWIDTH:e}");
        MIN_BANDWIDTH
    } else {
        sigma
    }
}

fn loo_density(sq_dist: DMatrix<f64>, dim: usize, sigma: f64) -> Loo {
    let n = sq_dist.nrows();
    let s2 = sigma * sigma;
    let log_norm = -0.5 * dim as f64 * (2.0 * PI * s2).ln();
    let mut weights = DMatrix::zeros(n, n);
    let mut log_density = vec![0.0; n];
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in (0..n).filter(|&j| j != i) {
            max = max.max(-sq_dist[(i, j)] / (2.0 * s2));
        }
        let mut total = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let w = (-sq_dist[(i, j)] / (2.0 * s2) - max).exp();
            weights[(i, j)] = w;
            total += w;
        }
        for j in 0..n {
            weights[(i, j)] /= total;
        }
        log_density[i] = log_norm + max + total.ln() - ((n - 1) as f64).ln();
    }
    Loo { log_density, weights, sq_dist, sigma, dim }
}

impl Loo {
    /// Given `b_i = ∂L/∂log p̂_i`, returns `∂L/∂z` and `∂L/∂log σ`.
    fn backprop(&self, z: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, f64) {
        let n = z.ncols();
        let s2 = self.sigma * self.sigma;
        // ∂L/∂z_k = Σ_j c_kj (z_j - z_k), c_kj = (b_k w_kj + b_j w_jk) / σ²
        let c = DMatrix::from_fn(n, n, |k, j| if j == k { 0.0 } else { (b[k] * self.weights[(k, j)] + b[j] * self.weights[(j, k)]) / s2 });
        let mut grad = z * c.transpose();
        for (k, mut col) in grad.column_iter_mut().enumerate() {
            col.axpy(-c.row(k).sum(), &z.column(k), 1.0);
        }
        let mut grad_log_sigma = 0.0;
        for k in 0..n {
            for j in (0..n).filter(|&j| j != k) {
                grad_log_sigma += b[k] * self.weights[(k, j)] * (self.sq_dist[(k, j)] / s2 - self.dim as f64);
            }
        }
        (grad, grad_log_sigma)
    }
}

/// Leave-one-out density estimate `(1/(N-1)) Σ_{j≠i} N(z_i - z_j; 0, σ² I)` at
/// every sample, as log-densities.
pub fn kde_log_density_loo(z: &DMatrix<f64>, sigma: f64) -> Vec<f64> {
    loo_density(sq_distances(z), z.nrows(), sigma).log_density
}

/// Kernel density at arbitrary query points (averaging over all samples).
pub fn kde_density_at(samples: &DMatrix<f64>, sigma: f64, query: &DMatrix<f64>) -> Vec<f64> {
    let d = samples.nrows();
    let s2 = sigma * sigma;
    let norm = (2.0 * PI * s2).powf(-0.5 * d as f64);
    query
        .column_iter()
        .map(|q| {
            samples.column_iter().map(|s| (-(q - s).norm_squared() / (2.0 * s2)).exp()).sum::<f64>() * norm
                / samples.ncols() as f64
        })
        .collect()
}

/// KDE mutual information between paired latent columns and its exact
/// gradients (latents and log-bandwidths). Larger is better.
pub fn mmi_loss(zx: &DMatrix<f64>, zy: &DMatrix<f64>, bw: &KdeBandwidths, mode: MmiMode) -> Result<MmiOutput> {
    let n = zx.ncols();
    if zy.ncols() != n {
        return Err(invalid(format!("views have {n} and {} samples", zy.ncols())));
    }
    if n < 3 {
        return Err(invalid(format!("MMI needs at least 3 samples, got {n}")));
    }
    let (dx, dy) = (zx.nrows(), zy.nrows());
    let [sj, sx, sy] = bw.log_sigma.map(clamp_sigma);
    let dist_x = sq_distances(zx);
    let dist_y = sq_distances(zy);
    let joint = loo_density(&dist_x + &dist_y, dx + dy, sj);
    let marg_x = loo_density(dist_x, dx, sx);
    let marg_y = loo_density(dist_y, dy, sy);

    let ratio: Vec<f64> = (0..n)
        .map(|i| joint.log_density[i] - marg_x.log_density[i] - marg_y.log_density[i])
        .collect();
    let (value, bj, bx, by) = match mode {
        MmiMode::SampleMean => {
            let inv = 1.0 / n as f64;
            (ratio.iter().sum::<f64>() * inv, vec![inv; n], vec![-inv; n], vec![-inv; n])
        }
        MmiMode::Literal => {
            let pj: Vec<f64> = joint.log_density.iter().map(|l| l.exp()).collect();
            let value = pj.iter().zip(&ratio).map(|(p, r)| p * r).sum();
            let bj = pj.iter().zip(&ratio).map(|(p, r)| p * (r + 1.0)).collect();
            let neg: Vec<f64> = pj.iter().map(|p| -p).collect();
            (value, bj, neg.clone(), neg)
        }
    };

    let stacked = {
        let mut s = DMatrix::zeros(dx + dy, n);
        s.rows_mut(0, dx).copy_from(zx);
        s.rows_mut(dx, dy).copy_from(zy);
        s
    };
    let (gj, gsj) = joint.backprop(&stacked, &bj);
    let (gx, gsx) = marg_x.backprop(zx, &bx);
    let (gy, gsy) = marg_y.backprop(zy, &by);
    let grad_x = gj.rows(0, dx) + gx;
    let grad_y = gj.rows(dx, dy) + gy;
    let clamped = |log_s: f64, g: f64| if log_s.exp() < MIN_BANDWIDTH { 0.0 } else { g };
    let grad_log_bw = [
        clamped(bw.log_sigma[0], gsj),
        clamped(bw.log_sigma[1], gsx),
        clamped(bw.log_sigma[2], gsy),
    ];
    Ok(MmiOutput { value, grad_x, grad_y, grad_log_bw })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradcheck::{finite_difference, relative_error};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn bw(s: f64) -> KdeBandwidths {
        KdeBandwidths::new(s, s, s).unwrap()
    }

    #[test]
    fn shuffled_views_near_zero_and_below_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zx = random(2, 2000, &mut rng);
        let mut perm: Vec<usize> = (0..2000).collect();
        perm.shuffle(&mut rng);
        let zy = zx.select_columns(&perm);
        // default bandwidths
        let indep = mmi_loss(&zx, &zy, &KdeBandwidths::default(), MmiMode::SampleMean).unwrap().value;
        assert!(indep.abs() < 0.1, "{indep}");
        let same = mmi_loss(&zx, &zx, &KdeBandwidths::default(), MmiMode::SampleMean).unwrap().value;
        assert!(same > indep);
    }

    #[test]
    fn correlated_gaussian_close_to_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho: f64 = 0.9;
        let n = 5000;
        let a = random(1, n, &mut rng);
        let b = random(1, n, &mut rng);
        let zy = &a * rho + b * (1.0 - rho * rho).sqrt();
        let analytic = -0.5 * (1.0 - rho * rho).ln();
        let est = mmi_loss(&a, &zy, &bw(0.15), MmiMode::SampleMean).unwrap().value;
        assert!((est - analytic).abs() < 0.3 * analytic, "{est} vs {analytic}");
    }

    #[test]
    fn too_few_samples() {
        let z = DMatrix::zeros(2, 2);
        assert!(mmi_loss(&z, &z, &bw(1.0), MmiMode::SampleMean).is_err());
    }

    #[test]
    fn marginal_density_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = random(1, 200, &mut rng);
        let sigma = 0.4;
        let (lo, hi) = (samples.min() - 8.0 * sigma, samples.max() + 8.0 * sigma);
        let steps = 4000;
        let h = (hi - lo) / steps as f64;
        let grid = DMatrix::from_fn(1, steps + 1, |_, k| lo + k as f64 * h);
        let p = kde_density_at(&samples, sigma, &grid);
        // composite trapezoid
        let integral = h * (p.iter().sum::<f64>() - 0.5 * (p[0] + p[steps]));
        assert!((integral - 1.0).abs() < 1e-2, "{integral}");
    }

    fn check_grads(mode: MmiMode, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zx = random(3, 24, &mut rng) * scale;
        let zy = &zx * 0.7 + random(3, 24, &mut rng) * (0.5 * scale);
        let bws = KdeBandwidths::new(0.9, 0.7, 1.2).unwrap();
        let out = mmi_loss(&zx, &zy, &bws, mode).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..zx.len() {
            let g = finite_difference(|p| Ok(mmi_loss(&DMatrix::from_column_slice(3, 24, p), &zy, &bws, mode)?.value), zx.as_slice(), k, 1e-5).unwrap();
            worst = worst.max(relative_error(out.grad_x.as_slice()[k], g));
        }
        for k in 0..zy.len() {
            let g = finite_difference(|p| Ok(mmi_loss(&zx, &DMatrix::from_column_slice(3, 24, p), &bws, mode)?.value), zy.as_slice(), k, 1e-5).unwrap();
            worst = worst.max(relative_error(out.grad_y.as_slice()[k], g));
        }
        for k in 0..3 {
            let g = finite_difference(
                |p| Ok(mmi_loss(&zx, &zy, &KdeBandwidths { log_sigma: [p[0], p[1], p[2]] }, mode)?.value),
                &bws.log_sigma,
                k,
                1e-5,
            )
            .unwrap();
            worst = worst.max(relative_error(out.grad_log_bw[k], g));
        }
        assert!(worst < 1e-4, "{mode:?}: {worst}");
    }

    #[test]
    fn sample_mean_gradients() {
        check_grads(MmiMode::SampleMean, 1.0, 3);
    }

    #[test]
    fn literal_gradients() {
        // small spread keeps the joint density (and so the literal sum) away from underflow
        check_grads(MmiMode::Literal, 0.3, 4);
    }
}
