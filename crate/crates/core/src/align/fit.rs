use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::{dtw, pairwise_distance, path_cost, Metric};
use crate::error::{invalid, Error, Result};
use crate::losses::{objective_with, prepare_batch, Dependence, KdeBandwidths, LossConfig};
use crate::matkernel::{covariance, cross_covariance, inv_sqrt_psd, sym_eig};
use crate::net::{AdamConfig, AdamState, Dense, EncoderStack, Mlp, Parameterized, StackConfig};
use crate::rng::{stream, Stream};
use crate::seqcore::{gather_aligned, uniform_init_path, FeatureSequence, WarpingPathPair};

/// Settings of the alternating optimization shared by both fitters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Passes over the aligned frames per phase 1.
    pub epochs: usize,
    pub max_outer: usize,
    /// Stop once the fraction of changed path cells falls below this.
    pub threshold: f64,
    pub metric: Metric,
    pub adam: AdamConfig,
    pub noise_sigma: f64,
    /// Topology; the autoencoder/private flags are taken from the loss config.
    pub stack: StackConfig,
    pub ctw_regularizer: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            epochs: 10,
            max_outer: 20,
            threshold: 0.01,
            metric: Metric::Cosine,
            adam: AdamConfig::default(),
            noise_sigma: 0.5,
            stack: StackConfig::default(),
            ctw_regularizer: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| Err(Error::Config { key: key.into(), message: message.into() });
        if self.batch_size < 3 {
            return bad("batch_size", "must be >= 3");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.max_outer == 0 {
            return bad("max_outer", "must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold", "must lie in [0, 1]");
        }
        if !(self.adam.lr > 0.0) {
            return bad("lr", "must be > 0");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma", "must be >= 0");
        }
        if !(self.ctw_regularizer > 0.0) {
            return bad("ctw_regularizer", "must be > 0");
        }
        if self.stack.latent_dim == 0 {
            return bad("latent_dim", "must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub outer_iter: usize,
    pub objective: f64,
    pub dtw_cost_total: f64,
    pub path_change_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub stack: EncoderStack,
    pub bandwidths: KdeBandwidths,
    pub paths: Vec<WarpingPathPair>,
    /// Uniform-path baseline: the objective and path cost under the model
    /// trained in the first outer iteration, before its DTW pass.
    pub initial: IterationRecord,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// Canonical correlations of the final linear projections (CTW only).
    pub correlations: Option<Vec<f64>>,
}

impl TrainRun {
    pub fn final_cost(&self) -> f64 {
        self.history.last().map_or(self.initial.dtw_cost_total, |r| r.dtw_cost_total)
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("outer_iter,objective,dtw_cost_total,path_change_fraction\n");
        for r in std::iter::once(&self.initial).chain(&self.history) {
            let _ = writeln!(out, "{},{},{},{}", r.outer_iter, r.objective, r.dtw_cost_total, r.path_change_fraction);
        }
        out
    }
}

fn check_pairs(pairs: &[(FeatureSequence, FeatureSequence)]) -> Result<(usize, usize)> {
    let (x0, y0) = pairs.first().ok_or_else(|| invalid("no sequence pairs given"))?;
    if pairs.iter().any(|(x, y)| x.dim() != x0.dim() || y.dim() != y0.dim()) {
        return Err(invalid("all pairs must share view dimensions"));
    }
    Ok((x0.dim(), y0.dim()))
}

/// Stacks the aligned frames of every pair into two column matrices.
pub fn pooled_frames(pairs: &[(FeatureSequence, FeatureSequence)], paths: &[WarpingPathPair]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let parts = pairs.iter().zip(paths).map(|((x, y), p)| gather_aligned(x, y, p)).collect::<Result<Vec<_>>>()?;
    let total: usize = parts.iter().map(|(a, _)| a.ncols()).sum();
    let mut px = DMatrix::zeros(parts[0].0.nrows(), total);
    let mut py = DMatrix::zeros(parts[0].1.nrows(), total);
    let mut at = 0;
    for (a, b) in &parts {
        px.columns_mut(at, a.ncols()).copy_from(a);
        py.columns_mut(at, b.ncols()).copy_from(b);
        at += a.ncols();
    }
    Ok((px, py))
}

/// Fraction of cells of the new paths that were not on the old ones.
pub fn path_change_fraction(old: &[WarpingPathPair], new: &[WarpingPathPair]) -> f64 {
    let mut changed = 0usize;
    let mut total = 0usize;
    for (o, n) in old.iter().zip(new) {
        let before: HashSet<(usize, usize)> = o.cells().collect();
        changed += n.cells().filter(|c| !before.contains(c)).count();
        total += n.len();
    }
    if total == 0 {
        0.0
    } else {
        changed as f64 / total as f64
    }
}

/// Latents of every pair under frozen encoders.
type Encoded = Vec<(DMatrix<f64>, DMatrix<f64>)>;

fn encode_all(stack: &EncoderStack, pairs: &[(FeatureSequence, FeatureSequence)]) -> Result<Encoded> {
    pairs.iter().map(|(x, y)| Ok((stack.encode_x(x.data())?, stack.encode_y(y.data())?))).collect()
}

fn realign(latents: &Encoded, metric: Metric) -> Result<(Vec<WarpingPathPair>, f64)> {
    let mut total = 0.0;
    let mut paths = Vec::with_capacity(latents.len());
    for (zx, zy) in latents {
        let r = dtw(&pairwise_distance(zx, zy, metric)?)?;
        total += r.total_cost;
        paths.push(r.path);
    }
    Ok((paths, total))
}

fn paths_cost(latents: &Encoded, paths: &[WarpingPathPair], metric: Metric) -> Result<f64> {
    let mut total = 0.0;
    for ((zx, zy), p) in latents.iter().zip(paths) {
        total += path_cost(&pairwise_distance(zx, zy, metric)?, p);
    }
    Ok(total)
}

/// Even split of `n` items into `max(1, n / size)` contiguous batches.
fn batch_bounds(n: usize, size: usize) -> Vec<(usize, usize)> {
    let nb = (n / size).max(1);
    (0..nb).map(|b| (b * n / nb, (b + 1) * n / nb)).collect()
}

fn diverged(iteration: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(detail) => Error::Diverged { iteration, detail },
        other => other,
    }
}

/// Alternates encoder training on the currently aligned frames with DTW
/// re-alignment of every pair, starting from uniform paths.
pub fn transience_fit(pairs: &[(FeatureSequence, FeatureSequence)], loss: &LossConfig, train: &TrainConfig) -> Result<TrainRun> {
    loss.validate()?;
    train.validate()?;
    let (dx, dy) = check_pairs(pairs)?;
    let stack_cfg = StackConfig { use_autoencoder: loss.use_autoencoder, use_private: loss.use_private, ..train.stack.clone() };
    let mut stack = EncoderStack::new(dx, dy, &stack_cfg, &mut stream(train.seed, Stream::Init))?;
    let mut bandwidths = loss.initial_bandwidths();
    let train_bw = loss.dependence == Dependence::Mmi;
    let mut sizes = stack.tensor_sizes();
    if train_bw {
        sizes.push(3);
    }
    let mut adam = AdamState::new(train.adam, &sizes);
    let mut batch_rng = stream(train.seed, Stream::Batching);
    let mut shuffle_rng = stream(train.seed, Stream::Shuffle);
    let mut noise_rng = stream(train.seed, Stream::Noise);

    let mut paths = pairs.iter().map(|(x, y)| uniform_init_path(x.len(), y.len())).collect::<Result<Vec<_>>>()?;
    let mut initial = None;
    let mut history = Vec::new();
    let mut converged = false;
    for it in 1..=train.max_outer {
        let (fx, fy) = pooled_frames(pairs, &paths)?;
        let n = fx.ncols();
        if n < 3 {
            return Err(invalid("need at least 3 aligned frames to train"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut epoch_objective = 0.0;
        for _ in 0..train.epochs {
            order.shuffle(&mut batch_rng);
            let bounds = batch_bounds(n, train.batch_size);
            epoch_objective = 0.0;
            for &(lo, hi) in &bounds {
                let idx = &order[lo..hi];
                let batch = prepare_batch(fx.select_columns(idx), fy.select_columns(idx), loss, train.noise_sigma, &mut noise_rng, &mut shuffle_rng)?;
                let out = objective_with(&stack, &batch, &bandwidths, loss).map_err(diverged(it))?;
                epoch_objective += out.value / bounds.len() as f64;
                let mut grad_slices: Vec<&[f64]> = out.grads.slices();
                let mut params = stack.param_slices_mut();
                if train_bw {
                    grad_slices.push(&out.grad_log_bw);
                    params.push(&mut bandwidths.log_sigma);
                }
                adam.step(params, &grad_slices).map_err(diverged(it))?;
            }
        }
        if !epoch_objective.is_finite() {
            return Err(Error::Diverged { iteration: it, detail: "objective is not finite".into() });
        }
        let latents = encode_all(&stack, pairs)?;
        if initial.is_none() {
            initial = Some(IterationRecord {
                outer_iter: 0,
                objective: epoch_objective,
                dtw_cost_total: paths_cost(&latents, &paths, train.metric)?,
                path_change_fraction: 0.0,
            });
        }
        let (new_paths, cost) = realign(&latents, train.metric)?;
        let change = path_change_fraction(&paths, &new_paths);
        paths = new_paths;
        log::info!("outer {it}: objective {epoch_objective:.6} dtw cost {cost:.4} changed {change:.4}");
        history.push(IterationRecord { outer_iter: it, objective: epoch_objective, dtw_cost_total: cost, path_change_fraction: change });
        if change < train.threshold {
            converged = true;
            break;
        }
    }
    Ok(TrainRun { stack, bandwidths, paths, initial: initial.expect("at least one iteration"), history, converged, correlations: None })
}

/// Closed-form linear CCA projections.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCca {
    /// `d_z × d_x` and `d_z × d_y` projection matrices.
    pub wx: DMatrix<f64>,
    pub wy: DMatrix<f64>,
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    /// Canonical correlations, descending.
    pub correlations: Vec<f64>,
}

impl LinearCca {
    pub fn project_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        affine(&self.wx, &self.mean_x, x)
    }

    pub fn project_y(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        affine(&self.wy, &self.mean_y, y)
    }

    /// The projections as single-layer linear encoders.
    pub fn as_stack(&self) -> Result<EncoderStack> {
        let member = |w: &DMatrix<f64>, mean: &DVector<f64>| Mlp::from_layers(vec![Dense { weights: w.clone(), bias: -(w * mean) }], 0.0);
        EncoderStack::from_members([Some(member(&self.wx, &self.mean_x)?), Some(member(&self.wy, &self.mean_y)?), None, None, None, None])
    }
}

fn affine(w: &DMatrix<f64>, mean: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    w * c
}

/// Top-`dz` canonical directions of paired columns `x`, `y` by whitening and
/// an eigendecomposition of the whitened cross-covariance.
pub fn linear_cca(x: &DMatrix<f64>, y: &DMatrix<f64>, dz: usize, reg: f64) -> Result<LinearCca> {
    let (dx, dy) = (x.nrows(), y.nrows());
    if dz == 0 || dz > dx.min(dy) {
        return Err(invalid(format!("cannot extract {dz} canonical pairs from dims ({dx}, {dy})")));
    }
    if x.ncols() <= dx.max(dy) {
        return Err(Error::IllConditioned(format!("{} frames are too few for CCA on dims ({dx}, {dy})", x.ncols())));
    }
    let p = inv_sqrt_psd(&covariance(x, reg)?, 1e-14)?;
    let q = inv_sqrt_psd(&covariance(y, reg)?, 1e-14)?;
    let t = &p * cross_covariance(x, y)? * &q;
    let left = sym_eig(&(&t * t.transpose()))?;
    let right = sym_eig(&(t.transpose() * &t))?;
    let mut u = DMatrix::zeros(dx, dz);
    let mut v = DMatrix::zeros(dy, dz);
    let mut correlations = Vec::with_capacity(dz);
    for k in 0..dz {
        let uk = left.eigenvectors.column(dx - 1 - k).into_owned();
        let s = left.eigenvalues[dx - 1 - k].max(0.0).sqrt();
        let tv = t.transpose() * &uk;
        let vk = if s > 1e-12 { tv / s } else { right.eigenvectors.column(dy - 1 - k).into_owned() };
        u.set_column(k, &uk);
        v.set_column(k, &vk);
        correlations.push(s);
    }
    Ok(LinearCca { wx: u.transpose() * p, wy: v.transpose() * q, mean_x: x.column_mean(), mean_y: y.column_mean(), correlations })
}

/// Canonical time warping: closed-form linear CCA alternated with DTW.
pub fn ctw_fit(pairs: &[(FeatureSequence, FeatureSequence)], train: &TrainConfig) -> Result<TrainRun> {
    train.validate()?;
    let (dx, dy) = check_pairs(pairs)?;
    let dz = train.stack.latent_dim.min(dx).min(dy);
    let mut paths = pairs.iter().map(|(x, y)| uniform_init_path(x.len(), y.len())).collect::<Result<Vec<_>>>()?;
    let mut initial = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut model = None;
    for it in 1..=train.max_outer {
        let (fx, fy) = pooled_frames(pairs, &paths)?;
        let cca = linear_cca(&fx, &fy, dz, train.ctw_regularizer)?;
        let objective = -cca.correlations.iter().map(|r| r * r).sum::<f64>().sqrt();
        let stack = cca.as_stack()?;
        let latents = encode_all(&stack, pairs)?;
        if initial.is_none() {
            initial = Some(IterationRecord { outer_iter: 0, objective, dtw_cost_total: paths_cost(&latents, &paths, train.metric)?, path_change_fraction: 0.0 });
        }
        let (new_paths, cost) = realign(&latents, train.metric)?;
        let change = path_change_fraction(&paths, &new_paths);
        paths = new_paths;
        log::info!("ctw outer {it}: objective {objective:.6} dtw cost {cost:.4} changed {change:.4}");
        history.push(IterationRecord { outer_iter: it, objective, dtw_cost_total: cost, path_change_fraction: change });
        model = Some((stack, cca.correlations));
        if change < train.threshold {
            converged = true;
            break;
        }
    }
    let (stack, correlations) = model.expect("at least one iteration");
    Ok(TrainRun {
        stack,
        bandwidths: KdeBandwidths::default(),
        paths,
        initial: initial.expect("at least one iteration"),
        history,
        converged,
        correlations: Some(correlations),
    })
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

    /// Independent oracle: Cholesky whitening of Σxx and a dense symmetric
    /// eigensolver on `L⁻¹ Σxy Σyy⁻¹ Σyx L⁻ᵀ`.
    fn oracle_correlations(x: &DMatrix<f64>, y: &DMatrix<f64>, reg: f64) -> Vec<f64> {
        let n = x.ncols() as f64;
        let cx = x.clone() - x.column_mean() * DMatrix::from_element(1, x.ncols(), 1.0);
        let cy = y.clone() - y.column_mean() * DMatrix::from_element(1, y.ncols(), 1.0);
        let sxx = &cx * cx.transpose() / (n - 1.0) + DMatrix::identity(x.nrows(), x.nrows()) * reg;
        let syy = &cy * cy.transpose() / (n - 1.0) + DMatrix::identity(y.nrows(), y.nrows()) * reg;
        let sxy = &cx * cy.transpose() / (n - 1.0);
        let l = sxx.cholesky().unwrap().l();
        let linv = l.try_inverse().unwrap();
        let m = &linv * &sxy * syy.try_inverse().unwrap() * sxy.transpose() * linv.transpose();
        let m = (&m + m.transpose()) * 0.5;
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    #[test]
    fn linear_cca_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random(5, 300, &mut rng);
        let y = DMatrix::from_fn(7, 5, |_, _| rng.random::<f64>() - 0.5) * &x + random(7, 300, &mut rng);
        let cca = linear_cca(&x, &y, 5, 1e-10).unwrap();
        let oracle = oracle_correlations(&x, &y, 1e-10);
        for (a, b) in cca.correlations.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        // projected views realize the correlations
        let (zx, zy) = (cca.project_x(&x), cca.project_y(&y));
        for k in 0..5 {
            let a = zx.row(k);
            let b = zy.row(k);
            let r = a.dot(&b) / (a.norm() * b.norm());
            assert!((r - cca.correlations[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn ctw_on_linear_views_aligns_diagonally() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(4, 60, &mut rng);
        let a = DMatrix::<f64>::identity(4, 4) + random(4, 4, &mut rng) * 0.3;
        let y = &a * &x;
        let pairs = vec![(FeatureSequence::new(x).unwrap(), FeatureSequence::new(y).unwrap())];
        let cfg = TrainConfig { stack: StackConfig { latent_dim: 4, ..Default::default() }, ctw_regularizer: 1e-10, ..Default::default() };
        let run = ctw_fit(&pairs, &cfg).unwrap();
        assert!(run.converged && run.history.len() <= 2);
        assert!(run.correlations.as_ref().unwrap().iter().all(|r| (r - 1.0).abs() < 1e-6));
        assert_eq!(run.paths[0].phi_x(), run.paths[0].phi_y());
        assert!(run.final_cost() <= run.initial.dtw_cost_total + 1e-9);
    }

    #[test]
    fn change_fraction_counts_new_cells() {
        let a = WarpingPathPair::new(vec![1, 2, 3], vec![1, 2, 3], 3, 3).unwrap();
        let b = WarpingPathPair::new(vec![1, 2, 2, 3], vec![1, 1, 2, 3], 3, 3).unwrap();
        assert_eq!(path_change_fraction(&[a.clone()], &[a.clone()]), 0.0);
        assert_eq!(path_change_fraction(&[a], &[b]), 0.25);
    }

    #[test]
    fn batches_cover_everything() {
        assert_eq!(batch_bounds(10, 512), vec![(0, 10)]);
        let b = batch_bounds(1100, 512);
        assert_eq!(b, vec![(0, 550), (550, 1100)]);
    }

    #[test]
    fn transience_history_and_paths_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random(2, 40, &mut rng);
        let x = FeatureSequence::new(h.map(f64::tanh)).unwrap();
        let y = FeatureSequence::new(DMatrix::from_fn(3, 40, |r, c| h[(r % 2, c)] * (r as f64 + 1.0))).unwrap();
        let loss = LossConfig { use_autoencoder: true, ..Default::default() };
        let cfg = TrainConfig {
            batch_size: 16,
            epochs: 2,
            max_outer: 3,
            stack: StackConfig { latent_dim: 2, hidden: vec![8], ..Default::default() },
            adam: AdamConfig { lr: 1e-3, ..Default::default() },
            ..Default::default()
        };
        let pairs = vec![(x, y)];
        let run = transience_fit(&pairs, &loss, &cfg).unwrap();
        assert!(run.history.len() <= 3);
        run.paths[0].validate(40, 40).unwrap();
        let csv = run.history_csv();
        assert!(csv.starts_with("outer_iter,objective,dtw_cost_total,path_change_fraction\n0,"));
        assert_eq!(csv.lines().count(), run.history.len() + 2);
        let again = transience_fit(&pairs, &loss, &cfg).unwrap();
        assert_eq!(again.history_csv(), csv);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(transience_fit(&[], &LossConfig::default(), &TrainConfig::default()).is_err());
        assert!(ctw_fit(&[], &TrainConfig::default()).is_err());
    }
}
