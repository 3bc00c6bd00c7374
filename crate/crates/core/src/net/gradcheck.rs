//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_COORDS_PER_TENSOR: usize = 20;
/// Denominator floor of [`relative_error`].
pub const RELATIVE_FLOOR: f64 = 1e-8;
/// Step of the fourth-order stencil used to re-estimate derivatives whose
/// magnitude falls under [`RELATIVE_FLOOR`].
pub const COARSE_STEP: f64 = 1e-3;
/// Steps tried, in order, when the default step straddles a kink.
pub const FINE_STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn finite_difference<F>(mut f: F, x: &[f64], k: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    probe[k] = x[k] + h;
    let plus = f(&probe)?;
    probe[k] = x[k] - h;
    let minus = f(&probe)?;
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite(format!("loss at perturbed coordinate {k}")));
    }
    Ok((plus - minus) / (2.0 * h))
}

/// Fourth-order central difference
/// `(f(x - 2h) - 8 f(x - h) + 8 f(x + h) - f(x + 2h)) / 12h`.
pub fn five_point_difference<F>(mut f: F, x: &[f64], k: usize, h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut at = |offset: f64| -> Result<f64> {
        probe[k] = x[k] + offset;
        let v = f(&probe)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss at perturbed coordinate {k}")));
        }
        Ok(v)
    };
    let (m2, m1, p1, p2) = (at(-2.0 * h)?, at(-h)?, at(h)?, at(2.0 * h)?);
    Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h))
}

/// Central difference at the first of [`FINE_STEPS`] whose forward and
/// backward one-sided differences agree within `tolerance` (relative), that is
/// whose stencil does not straddle a kink of a piecewise-smooth loss. Falls back
/// to the finest step.
pub fn kink_free_difference<F>(mut f: F, x: &[f64], k: usize, value: f64, tolerance: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut central = 0.0;
    for h in FINE_STEPS {
        probe[k] = x[k] + h;
        let plus = f(&probe)?;
        probe[k] = x[k] - h;
        let minus = f(&probe)?;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss at perturbed coordinate {k}")));
        }
        central = (plus - minus) / (2.0 * h);
        let (forward, backward) = ((plus - value) / h, (value - minus) / h);
        if (forward - backward).abs() <= tolerance * central.abs().max(RELATIVE_FLOOR) {
            break;
        }
    }
    Ok(central)
}

/// Compares the analytic gradient returned by `loss` at `x0` against central
/// differences at up to `coords_per_tensor` random coordinates of each tensor.
///
/// `loss` maps a flat parameter vector to `(value, gradient)`. When both the
/// analytic and the numeric derivative are below [`RELATIVE_FLOOR`], the
/// `1e-5` step is dominated by the rounding of the loss value itself, so the
/// derivative is re-estimated with [`five_point_difference`] at
/// [`COARSE_STEP`]. A coordinate that fails at the default step is retried
/// with [`kink_free_difference`], since a stencil across a leaky-ReLU kink
/// measures a secant rather than the derivative on either side.
pub fn gradcheck<F, R>(
    mut loss: F,
    x0: &[f64],
    tensor_sizes: &[usize],
    coords_per_tensor: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<GradcheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    R: Rng + ?Sized,
{
    let total: usize = tensor_sizes.iter().sum();
    if total != x0.len() {
        return Err(crate::error::invalid(format!(
            "tensor sizes sum to {total} but {} parameters given",
            x0.len()
        )));
    }
    let (value, analytic) = loss(x0)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("loss at the evaluation point".into()));
    }
    if analytic.len() != x0.len() {
        return Err(crate::error::invalid("analytic gradient has the wrong length"));
    }
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        tolerance,
    };
    let mut offset = 0;
    for &size in tensor_sizes {
        let coords: Vec<usize> = if size <= coords_per_tensor {
            (0..size).collect()
        } else {
            sample(rng, size, coords_per_tensor).into_vec()
        };
        for c in coords {
            let k = offset + c;
            let mut numeric = finite_difference(|p| loss(p).map(|(v, _)| v), x0, k, DEFAULT_STEP)?;
            if analytic[k].abs().max(numeric.abs()) < RELATIVE_FLOOR {
                numeric = five_point_difference(|p| loss(p).map(|(v, _)| v), x0, k, COARSE_STEP)?;
            } else if relative_error(analytic[k], numeric) > tolerance {
                numeric = kink_free_difference(|p| loss(p).map(|(v, _)| v), x0, k, value, tolerance)?;
            }
            let err = relative_error(analytic[k], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst_index = k;
                report.worst_analytic = analytic[k];
                report.worst_numeric = numeric;
            }
        }
        offset += size;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_is_exact() {
        let a = [3.0, -1.0, 0.5, 2.0];
        let loss = |p: &[f64]| {
            let v = p.iter().zip(&a).map(|(x, a)| a * x * x).sum::<f64>();
            let g = p.iter().zip(&a).map(|(x, a)| 2.0 * a * x).collect();
            Ok((v, g))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradcheck(loss, &[1.0, 2.0, -0.5, 0.3], &[2, 2], 20, 1e-9, &mut rng).unwrap();
        assert_eq!(r.checked, 4);
        assert!(r.max_rel_error < 1e-9, "{}", r.max_rel_error);
    }

    #[test]
    fn invariant_direction_passes() {
        // exactly flat in p[1]; the fine step only sees rounding of the value
        let loss = |p: &[f64]| {
            let shift = p[1];
            let v = 2.0 + (p[0] + shift) * (p[0] + shift) - 2.0 * shift * p[0] - shift * shift;
            Ok((v, vec![2.0 * p[0], 0.0]))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradcheck(loss, &[0.7, 0.3], &[2], 20, 1e-4, &mut rng).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    fn leaky(v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            0.03 * v
        }
    }

    #[test]
    fn kink_inside_default_stencil_passes() {
        // kink 3e-6 away: the 1e-5 stencil straddles it, the 1e-6 one does not
        let loss = |p: &[f64]| {
            let v = leaky(p[0] - 3e-6) + 0.5 * p[0] * p[0];
            Ok((v, vec![if p[0] > 3e-6 { 1.0 } else { 0.03 } + p[0]]))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradcheck(loss, &[0.0], &[1], 20, 1e-4, &mut rng).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn wrong_gradient_near_kink_still_fails() {
        let loss = |p: &[f64]| {
            let v = leaky(p[0] - 3e-6) + 0.5 * p[0] * p[0];
            Ok((v, vec![1.1 * (if p[0] > 3e-6 { 1.0 } else { 0.03 } + p[0])]))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradcheck(loss, &[0.0], &[1], 20, 1e-4, &mut rng).unwrap();
        assert!(!r.passed(), "{r:?}");
    }

    #[test]
    fn five_point_is_exact_for_quartics() {
        let f = |p: &[f64]| Ok(p[0].powi(4) - 2.0 * p[0].powi(3));
        let d = five_point_difference(f, &[1.5], 0, 1e-2).unwrap();
        assert!((d - (4.0 * 1.5f64.powi(3) - 6.0 * 1.5 * 1.5)).abs() < 1e-9);
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let loss = |p: &[f64]| Ok((p[0] * p[0], vec![3.0 * p[0]]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradcheck(loss, &[1.0], &[1], 20, 1e-4, &mut rng).unwrap();
        assert!(!r.passed());
        assert!((r.max_rel_error - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn nonfinite_loss_is_diagnosed() {
        let loss = |p: &[f64]| Ok((p[0].ln(), vec![1.0 / p[0]]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(gradcheck(loss, &[-1.0], &[1], 20, 1e-4, &mut rng), Err(Error::NonFinite(_))));
    }

    #[test]
    fn samples_limited_coordinates() {
        let loss = |p: &[f64]| Ok((p.iter().sum::<f64>(), vec![1.0; p.len()]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = gradcheck(loss, &vec![0.0; 100], &[60, 40], 20, 1e-6, &mut rng).unwrap();
        assert_eq!(r.checked, 40);
        assert!(r.passed());
    }
}
