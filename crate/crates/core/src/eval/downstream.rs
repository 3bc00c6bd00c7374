use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{invalid, Result};
use crate::net::{AdamConfig, AdamState, Mlp, Parameterized};
use crate::rng::{stream, Stream};
use crate::seqcore::{FeatureSequence, WarpingPathPair};

/// The downstream x→y regressor and its training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorConfig {
    pub hidden: Vec<usize>,
    /// Leaky slope of the hidden units; 0 is a plain ReLU.
    pub slope: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64], slope: 0.0, lr: 1e-3, batch_size: 64, epochs: 100 }
    }
}

/// Frame pairs `(x index, y index)`, 0-based, that a regressor trains on.
pub type FramePairs = Vec<(usize, usize)>;

pub fn path_frame_pairs(path: &WarpingPathPair) -> FramePairs {
    path.cells().collect()
}

/// Pairs `(truth[s] - 1, s)` for every Y frame `s`.
pub fn truth_frame_pairs(truth: &[usize]) -> FramePairs {
    truth.iter().enumerate().map(|(s, &x)| (x - 1, s)).collect()
}

fn gather(seqs: &[(&FeatureSequence, &FeatureSequence)], pairs: &[FramePairs]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let total: usize = pairs.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(invalid("no frame pairs to train or test on"));
    }
    let (dx, dy) = (seqs[0].0.dim(), seqs[0].1.dim());
    let mut gx = DMatrix::zeros(dx, total);
    let mut gy = DMatrix::zeros(dy, total);
    let mut at = 0;
    for ((x, y), p) in seqs.iter().zip(pairs) {
        for &(i, j) in p {
            if i >= x.len() || j >= y.len() {
                return Err(invalid("frame pair out of range"));
            }
            gx.set_column(at, &x.data().column(i));
            gy.set_column(at, &y.data().column(j));
            at += 1;
        }
    }
    Ok((gx, gy))
}

/// Trains the regressor on `train` frame pairs and returns its mean squared
/// error (per entry) on the `test` frame pairs.
pub fn regression_mse(
    train_seqs: &[(&FeatureSequence, &FeatureSequence)],
    train_pairs: &[FramePairs],
    test_seqs: &[(&FeatureSequence, &FeatureSequence)],
    test_pairs: &[FramePairs],
    cfg: &RegressorConfig,
    seed: u64,
) -> Result<f64> {
    if train_seqs.len() != train_pairs.len() || test_seqs.len() != test_pairs.len() || train_seqs.is_empty() || test_seqs.is_empty() {
        return Err(invalid("every sequence pair needs its frame pairs"));
    }
    let (tx, ty) = gather(train_seqs, train_pairs)?;
    let (vx, vy) = gather(test_seqs, test_pairs)?;
    let sizes: Vec<usize> = std::iter::once(tx.nrows()).chain(cfg.hidden.iter().copied()).chain([ty.nrows()]).collect();
    let mut net = Mlp::new(&sizes, cfg.slope, &mut stream(seed, Stream::Regressor))?;
    let mut adam = AdamState::new(AdamConfig { lr: cfg.lr, ..Default::default() }, &net.tensor_sizes());
    let mut batch_rng = stream(seed.wrapping_add(1), Stream::Regressor);
    let n = tx.ncols();
    let mut order: Vec<usize> = (0..n).collect();
    let nb = (n / cfg.batch_size.max(1)).max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut batch_rng);
        for b in 0..nb {
            let idx = &order[b * n / nb..(b + 1) * n / nb];
            let (bx, by) = (tx.select_columns(idx), ty.select_columns(idx));
            let (out, cache) = net.forward(&bx)?;
            let grad = (out - by) * (2.0 / (idx.len() * ty.nrows()) as f64);
            let (g, _) = net.backward(&cache, &grad)?;
            adam.step(net.param_slices_mut(), &g.slices())?;
        }
    }
    let pred = net.predict(&vx)?;
    Ok((pred - vy).norm_squared() / vx.ncols() as f64 / ty.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DownstreamResult {
    pub mse: f64,
    /// Same regressor trained on the true alignment of the training pairs.
    pub oracle_mse: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_views_reach_noise_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = FeatureSequence::new(DMatrix::from_fn(3, 300, |_, _| rng.sample::<f64, _>(StandardNormal))).unwrap();
        let id: FramePairs = (0..300).map(|i| (i, i)).collect();
        let cfg = RegressorConfig::default();
        let mse = regression_mse(&[(&x, &x)], &[id.clone()], &[(&x, &x)], &[id], &cfg, 0).unwrap();
        assert!(mse < 0.02, "{mse}");
    }

    #[test]
    fn empty_training_set_rejected() {
        let x = FeatureSequence::new(DMatrix::zeros(2, 3)).unwrap();
        let cfg = RegressorConfig::default();
        assert!(regression_mse(&[(&x, &x)], &[vec![]], &[(&x, &x)], &[vec![(0, 0)]], &cfg, 0).is_err());
    }

    #[test]
    fn truth_pairs_are_zero_based() {
        assert_eq!(truth_frame_pairs(&[1, 1, 3]), vec![(0, 0), (0, 1), (2, 2)]);
    }
}
