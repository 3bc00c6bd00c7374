//! Finite-difference verification of every loss and of the composed
//! objective on small random problems.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    cca_loss, contrastive_loss, kl_loss, mmi_loss, objective_with, prepare_batch, reconstruction_loss, sample_negatives,
    Dependence, KdeBandwidths, LossConfig, MmiMode,
};
use crate::error::Result;
use crate::net::gradcheck::DEFAULT_COORDS_PER_TENSOR;
use crate::net::{gradcheck, EncoderStack, Parameterized, StackConfig};

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub samples: usize,
    pub latent_dim: usize,
    pub private_dim: usize,
    /// Random problems per entry.
    pub trials: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Entry whose analytic gradient is deliberately perturbed (failure-path hook).
    pub corrupt: Option<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { samples: 32, latent_dim: 4, private_dim: 3, trials: 5, tolerance: 1e-4, seed: 0, corrupt: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
enum Check {
    Cca,
    Mmi(MmiMode),
    Contrastive,
    Reconstruction,
    Kl,
    Objective { dep: Dependence, autoencoder: bool, private: bool },
}

fn checks() -> Vec<(String, Check)> {
    let mut v = vec![
        ("cca".to_string(), Check::Cca),
        ("mmi-literal".to_string(), Check::Mmi(MmiMode::Literal)),
        ("mmi-sample_mean".to_string(), Check::Mmi(MmiMode::SampleMean)),
        ("contrastive".to_string(), Check::Contrastive),
        ("reconstruction".to_string(), Check::Reconstruction),
        ("kl".to_string(), Check::Kl),
    ];
    for dep in Dependence::ALL {
        for (autoencoder, private) in [(false, false), (true, false), (false, true), (true, true)] {
            let mut name = format!("objective/{dep}");
            if autoencoder {
                name.push_str("+autoenc");
            }
            if private {
                name.push_str("+priv");
            }
            v.push((name, Check::Objective { dep, autoencoder, private }));
        }
    }
    v
}

pub fn suite_names() -> Vec<String> {
    checks().into_iter().map(|(n, _)| n).collect()
}

/// `filter` selects an entry by full name or by loss family, so `mmi`
/// selects both MMI modes and every MMI objective.
pub fn matches_filter(name: &str, filter: &str) -> bool {
    let base = name.strip_prefix("objective/").unwrap_or(name);
    name == filter || base == filter || base.split(['+', '-']).next() == Some(filter)
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)
}

fn split2(p: &[f64], a: (usize, usize), b: (usize, usize)) -> (DMatrix<f64>, DMatrix<f64>) {
    let na = a.0 * a.1;
    (DMatrix::from_column_slice(a.0, a.1, &p[..na]), DMatrix::from_column_slice(b.0, b.1, &p[na..na + b.0 * b.1]))
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.concat()
}

fn run_one(check: Check, cfg: &SuiteConfig, corrupt: bool, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, dz, dp) = (cfg.samples, cfg.latent_dim, cfg.private_dim);
    let bump = |mut g: Vec<f64>| {
        if corrupt {
            g.iter_mut().for_each(|v| *v = *v * 1.1 + 1e-3);
        }
        g
    };
    let coords = DEFAULT_COORDS_PER_TENSOR;
    let report = match check {
        Check::Cca => {
            let zx = gaussian(dz, n, 1.0, rng);
            let zy = &zx * 0.7 + gaussian(dz, n, 1.0, rng);
            let x0 = concat(&[zx.as_slice(), zy.as_slice()]);
            gradcheck(
                |p| {
                    let (a, b) = split2(p, (dz, n), (dz, n));
                    let o = cca_loss(&a, &b, 1e-4)?;
                    Ok((o.value, bump(concat(&[o.grad_x.as_slice(), o.grad_y.as_slice()]))))
                },
                &x0,
                &[dz * n, dz * n],
                coords,
                cfg.tolerance,
                rng,
            )?
        }
        Check::Mmi(mode) => {
            // literal weights shrink with the joint density, so keep latents compact
            let scale = if mode == MmiMode::Literal { 0.3 } else { 1.0 };
            let zx = gaussian(dz, n, scale, rng);
            let zy = &zx * 0.7 + gaussian(dz, n, scale, rng);
            let bw = [rng.random_range(-0.5..0.0), rng.random_range(-0.5..0.0), rng.random_range(-0.5..0.0)];
            let x0 = concat(&[zx.as_slice(), zy.as_slice(), &bw]);
            gradcheck(
                |p| {
                    let (a, b) = split2(p, (dz, n), (dz, n));
                    let k = 2 * dz * n;
                    let bw = KdeBandwidths { log_sigma: [p[k], p[k + 1], p[k + 2]] };
                    let o = mmi_loss(&a, &b, &bw, mode)?;
                    Ok((o.value, bump(concat(&[o.grad_x.as_slice(), o.grad_y.as_slice(), &o.grad_log_bw]))))
                },
                &x0,
                &[dz * n, dz * n, 3],
                coords,
                cfg.tolerance,
                rng,
            )?
        }
        Check::Contrastive => {
            let zx = gaussian(dz, n, 1.0, rng);
            let zy = &zx * 0.5 + gaussian(dz, n, 1.0, rng);
            let neg = sample_negatives(n, rng)?;
            let x0 = concat(&[zx.as_slice(), zy.as_slice()]);
            gradcheck(
                |p| {
                    let (a, b) = split2(p, (dz, n), (dz, n));
                    let o = contrastive_loss(&a, &b, &neg, 0.5)?;
                    Ok((o.value, bump(concat(&[o.grad_x.as_slice(), o.grad_y.as_slice()]))))
                },
                &x0,
                &[dz * n, dz * n],
                coords,
                cfg.tolerance,
                rng,
            )?
        }
        Check::Reconstruction => {
            let (dx, dy) = (dz + 1, dz + 2);
            let x = gaussian(dx, n, 1.0, rng);
            let y = gaussian(dy, n, 1.0, rng);
            let xh = gaussian(dx, n, 1.0, rng);
            let yh = gaussian(dy, n, 1.0, rng);
            let x0 = concat(&[xh.as_slice(), yh.as_slice()]);
            gradcheck(
                |p| {
                    let (a, b) = split2(p, (dx, n), (dy, n));
                    let o = reconstruction_loss(&x, &y, &a, &b, 1.0)?;
                    Ok((o.value, bump(concat(&[o.grad_xhat.as_slice(), o.grad_yhat.as_slice()]))))
                },
                &x0,
                &[dx * n, dy * n],
                coords,
                cfg.tolerance,
                rng,
            )?
        }
        Check::Kl => {
            let z = gaussian(dp, n, 1.3, rng).add_scalar(0.4);
            gradcheck(
                |p| {
                    let (v, g) = kl_loss(&DMatrix::from_column_slice(dp, n, p))?;
                    Ok((v, bump(g.as_slice().to_vec())))
                },
                z.as_slice(),
                &[dp * n],
                coords,
                cfg.tolerance,
                rng,
            )?
        }
        Check::Objective { dep, autoencoder, private } => {
            let loss_cfg = LossConfig { dependence: dep, use_autoencoder: autoencoder, use_private: private, ..Default::default() };
            let stack_cfg = StackConfig {
                latent_dim: dz,
                private_dim: dp,
                hidden: vec![8],
                use_autoencoder: autoencoder,
                use_private: private,
                ..Default::default()
            };
            let (dx, dy) = (dz + 2, dz + 3);
            let stack = EncoderStack::new(dx, dy, &stack_cfg, rng)?;
            let x = gaussian(dx, n, 1.0, rng);
            let y = gaussian(dy, n, 1.0, rng);
            let mut noise_rng = ChaCha8Rng::seed_from_u64(rng.random());
            let batch = prepare_batch(x, y, &loss_cfg, 0.5, &mut noise_rng, rng)?;
            let bw = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
            let mut sizes = stack.tensor_sizes();
            let mut x0 = stack.flat_params();
            if dep == Dependence::Mmi {
                sizes.push(3);
                x0.extend(bw);
            }
            let split = stack.flat_params().len();
            gradcheck(
                |p| {
                    let mut s = stack.clone();
                    s.set_flat_params(&p[..split])?;
                    let b = if p.len() > split { KdeBandwidths { log_sigma: [p[split], p[split + 1], p[split + 2]] } } else { KdeBandwidths { log_sigma: bw } };
                    let o = objective_with(&s, &batch, &b, &loss_cfg)?;
                    let mut g = o.grads.flat();
                    if p.len() > split {
                        g.extend(o.grad_log_bw);
                    }
                    Ok((o.value, bump(g)))
                },
                &x0,
                &sizes,
                coords,
                cfg.tolerance,
                rng,
            )?
        }
    };
    log::debug!(
        "{check:?}: worst coordinate {} analytic {:e} numeric {:e}",
        report.worst_index,
        report.worst_analytic,
        report.worst_numeric
    );
    Ok(report.max_rel_error)
}

/// Runs every entry (or those selected by `filter`) over `cfg.trials` random
/// problems and reports the worst relative error per entry.
pub fn run_suite(cfg: &SuiteConfig, filter: Option<&str>) -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    for (index, (name, check)) in checks().into_iter().enumerate() {
        if filter.is_some_and(|f| !matches_filter(&name, f)) {
            continue;
        }
        let corrupt = cfg.corrupt.as_deref() == Some(name.as_str());
        let mut worst: f64 = 0.0;
        for trial in 0..cfg.trials {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((index as u64) << 16) | trial as u64);
            worst = worst.max(run_one(check, cfg, corrupt, &mut rng)?);
        }
        out.push(SuiteEntry { passed: worst <= cfg.tolerance, max_rel_error: worst, name });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_selects_families() {
        let names = suite_names();
        let cca: Vec<_> = names.iter().filter(|n| matches_filter(n, "cca")).collect();
        assert_eq!(cca.len(), 5);
        assert_eq!(names.iter().filter(|n| matches_filter(n, "mmi-literal")).count(), 1);
        assert_eq!(names.iter().filter(|n| matches_filter(n, "kl")).count(), 1);
        assert_eq!(names.len(), 18);
    }

    #[test]
    fn corrupted_entry_fails() {
        let cfg = SuiteConfig { trials: 1, corrupt: Some("kl".into()), ..Default::default() };
        let out = run_suite(&cfg, Some("kl")).unwrap();
        assert_eq!(out.len(), 1);
        assert!(!out[0].passed);
    }
}
