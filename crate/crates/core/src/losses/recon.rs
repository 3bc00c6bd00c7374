use nalgebra::DMatrix;

use crate::error::{invalid, Result};

const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ReconstructionOutput {
    pub value: f64,
    pub grad_xhat: DMatrix<f64>,
    pub grad_yhat: DMatrix<f64>,
}

/// `(λ/N) (Σ‖x_i - x̂_i‖² + Σ‖y_i - ŷ_i‖²)`.
pub fn reconstruction_loss(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    xhat: &DMatrix<f64>,
    yhat: &DMatrix<f64>,
    lambda: f64,
) -> Result<ReconstructionOutput> {
    if x.shape() != xhat.shape() || y.shape() != yhat.shape() || x.ncols() != y.ncols() {
        return Err(invalid("reconstruction shapes do not match"));
    }
    let n = x.ncols().max(1) as f64;
    let rx = xhat - x;
    let ry = yhat - y;
    let value = lambda / n * (rx.norm_squared() + ry.norm_squared());
    let s = 2.0 * lambda / n;
    Ok(ReconstructionOutput { value, grad_xhat: rx * s, grad_yhat: ry * s })
}

/// KL divergence from a diagonal Gaussian fitted to the batch (biased
/// moments) to `N(0, I)`: `½ Σ_i (σ_i² + μ_i² - 1 - log σ_i²)`.
pub fn kl_loss(z: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let (d, n) = z.shape();
    if n < 2 {
        return Err(invalid("KL term needs at least 2 samples"));
    }
    let nf = n as f64;
    let mut value = 0.0;
    let mut grad = DMatrix::zeros(d, n);
    for r in 0..d {
        let row = z.row(r);
        let mu = row.sum() / nf;
        let raw_var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / nf;
        let floored = raw_var < VARIANCE_FLOOR;
        let var = raw_var.max(VARIANCE_FLOOR);
        value += 0.5 * (var + mu * mu - 1.0 - var.ln());
        let var_coeff = if floored { 0.0 } else { 1.0 - 1.0 / var };
        for c in 0..n {
            grad[(r, c)] = (var_coeff * (z[(r, c)] - mu) + mu) / nf;
        }
    }
    Ok((value, grad))
}
