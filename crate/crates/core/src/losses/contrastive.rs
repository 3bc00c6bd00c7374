use nalgebra::{DMatrix, DVectorView};
use rand::Rng;

use crate::error::{invalid, Result};

/// Norm product below which a cosine distance is treated as degenerate.
pub const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub value: f64,
    pub grad_x: DMatrix<f64>,
    pub grad_y: DMatrix<f64>,
    /// Number of distance evaluations that hit the norm guard.
    pub degenerate: usize,
    /// Number of samples whose hinge is active.
    pub active: usize,
}

/// Cosine distance `1 - u·v / (‖u‖‖v‖)` with its gradients in `u` and `v`.
/// Returns `(distance, d/du, d/dv, guarded)`.
pub fn cosine_distance_grad(u: DVectorView<f64>, v: DVectorView<f64>) -> (f64, nalgebra::DVector<f64>, nalgebra::DVector<f64>, bool) {
    let (nu, nv) = (u.norm(), v.norm());
    let dot = u.dot(&v);
    let denom = nu * nv;
    if denom < NORM_GUARD {
        // constant denominator: distance is linear in the dot product
        return (1.0 - dot / NORM_GUARD, -v.into_owned() / NORM_GUARD, -u.into_owned() / NORM_GUARD, true);
    }
    let c = dot / denom;
    let du = -(v / denom - u * (c / (nu * nu)));
    let dv = -(u / denom - v * (c / (nv * nv)));
    (1.0 - c, du, dv, false)
}

/// Negative index for every sample: a circular shift by a uniform offset in
/// `[1, n-1]`, so no sample is its own negative.
pub fn sample_negatives<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(invalid("negative sampling needs at least 2 samples"));
    }
    let offset = rng.random_range(1..n);
    Ok((0..n).map(|i| (i + offset) % n).collect())
}

/// Mean hinge `max(0, m + d(x_i, y_i) - d(x_i, y_neg(i)))` over the batch with
/// cosine distances. Smaller is better. Subgradient 0 at the kink.
pub fn contrastive_loss(zx: &DMatrix<f64>, zy: &DMatrix<f64>, negatives: &[usize], margin: f64) -> Result<ContrastiveOutput> {
    let n = zx.ncols();
    if zy.shape() != zx.shape() {
        return Err(invalid(format!("latent shapes differ: {:?} vs {:?}", zx.shape(), zy.shape())));
    }
    if negatives.len() != n {
        return Err(invalid("one negative index per sample is required"));
    }
    let mut seen = vec![false; n];
    for (i, &j) in negatives.iter().enumerate() {
        if j >= n || seen[j] || j == i {
            return Err(invalid("negatives must be a permutation without fixed points"));
        }
        seen[j] = true;
    }
    let mut grad_x = DMatrix::zeros(zx.nrows(), n);
    let mut grad_y = DMatrix::zeros(zy.nrows(), n);
    let mut total = 0.0;
    let mut degenerate = 0;
    let mut active = 0;
    let scale = 1.0 / n as f64;
    for i in 0..n {
        let j = negatives[i];
        let (dp, gxp, gyp, gp) = cosine_distance_grad(zx.column(i), zy.column(i));
        let (dn, gxn, gyn, gn) = cosine_distance_grad(zx.column(i), zy.column(j));
        degenerate += gp as usize + gn as usize;
        let h = margin + dp - dn;
        if h > 0.0 {
            active += 1;
            total += h;
            let mut gx = grad_x.column_mut(i);
            gx += (gxp - gxn) * scale;
            let mut gy = grad_y.column_mut(i);
            gy += gyp * scale;
            let mut gyneg = grad_y.column_mut(j);
            gyneg -= gyn * scale;
        }
    }
    if degenerate > 0 {
        log::debug!("{degenerate} cosine distances hit the norm guard");
    }
    Ok(ContrastiveOutput { value: total * scale, grad_x, grad_y, degenerate, active })
}
