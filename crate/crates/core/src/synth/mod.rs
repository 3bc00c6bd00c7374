//! Synthetic two-view sequence pairs with a shared latent trajectory, distinct
//! nonlinear observation maps and a known monotone time warp.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, Stream};
use crate::seqcore::io::{read_sequence, write_sequence};
use crate::seqcore::FeatureSequence;

/// Smooth latent trajectory (`k × t`): a Gaussian random walk convolved with
/// a Gaussian window of std `smoothness` frames, z-scored per dimension.
pub fn gen_latent<R: Rng + ?Sized>(t: usize, k: usize, smoothness: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if t < 2 || k == 0 {
        return Err(invalid("latent trajectory needs t >= 2 and k >= 1"));
    }
    if !(smoothness > 0.0) {
        return Err(invalid("smoothness must be positive"));
    }
    let mut walk = DMatrix::zeros(k, t);
    for r in 0..k {
        let mut acc = 0.0;
        for c in 0..t {
            acc += rng.sample::<f64, _>(StandardNormal);
            walk[(r, c)] = acc;
        }
    }
    let half = (3.0 * smoothness).ceil() as i64;
    let window: Vec<f64> = (-half..=half).map(|o| (-0.5 * (o as f64 / smoothness).powi(2)).exp()).collect();
    let norm: f64 = window.iter().sum();
    let mut out = DMatrix::zeros(k, t);
    for c in 0..t {
        for (w, o) in window.iter().zip(-half..=half) {
            let src = (c as i64 + o).clamp(0, t as i64 - 1) as usize;
            for r in 0..k {
                out[(r, c)] += w / norm * walk[(r, src)];
            }
        }
    }
    for r in 0..k {
        let mean: f64 = out.row(r).sum() / t as f64;
        let sd = (out.row(r).iter().map(|v: &f64| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64).sqrt();
        let sd = if sd < 1e-12 { 1.0 } else { sd };
        for c in 0..t {
            out[(r, c)] = (out[(r, c)] - mean) / sd;
        }
    }
    Ok(out)
}

/// Ground-truth map from each of `ty` frames to a frame of the `tx`-frame
/// view (1-based): cumulative increments uniform in `[1 - jitter, 1 + jitter]`
/// rescaled onto `[0, tx - 1]` and rounded up.
pub fn gen_warp<R: Rng + ?Sized>(tx: usize, ty: usize, jitter: f64, rng: &mut R) -> Result<Vec<usize>> {
    if tx < 2 || ty < 2 {
        return Err(invalid("warp needs both lengths >= 2"));
    }
    if !(0.0..1.0).contains(&jitter) {
        return Err(invalid("jitter must lie in [0, 1)"));
    }
    let mut cum = vec![0.0; ty];
    for s in 1..ty {
        let inc = if jitter > 0.0 { rng.random_range(1.0 - jitter..=1.0 + jitter) } else { 1.0 };
        cum[s] = cum[s - 1] + inc;
    }
    let last = cum[ty - 1];
    let scale = (tx - 1) as f64 / last;
    let mut map: Vec<usize> = cum.iter().map(|c| 1 + ((c * scale) - 1e-9).ceil().max(0.0) as usize).collect();
    map[0] = 1;
    map[ty - 1] = tx;
    for s in 1..ty {
        map[s] = map[s].clamp(map[s - 1], tx);
    }
    Ok(map)
}

/// Benchmark generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub dx: usize,
    pub dy: usize,
    pub k: usize,
    pub tx: usize,
    pub ty: usize,
    pub noise: f64,
    pub jitter: f64,
    pub smoothness: f64,
    /// Std of each entry of the observation maps, times `sqrt(k)`.
    pub gain: f64,
    /// Sequence lengths vary uniformly by this relative amount.
    pub length_spread: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            dx: 12,
            dy: 25,
            k: 6,
            tx: 200,
            ty: 240,
            noise: 0.1,
            jitter: 0.5,
            smoothness: 1.0,
            gain: 1.5,
            length_spread: 0.1,
            n_train: 4,
            n_test: 2,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if self.dx == 0 {
            return bad("dx", "must be >= 1".into());
        }
        if self.dy == 0 {
            return bad("dy", "must be >= 1".into());
        }
        if self.k == 0 || self.k > self.dx.min(self.dy) {
            return bad("k", format!("must lie in [1, min(dx, dy)] = [1, {}]", self.dx.min(self.dy)));
        }
        if self.tx < 2 {
            return bad("tx", "must be >= 2".into());
        }
        if self.ty < 2 {
            return bad("ty", "must be >= 2".into());
        }
        if !(self.noise >= 0.0) {
            return bad("noise", "must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad("jitter", "must lie in [0, 1)".into());
        }
        if !(self.smoothness > 0.0) {
            return bad("smoothness", "must be > 0".into());
        }
        if !(self.gain > 0.0) {
            return bad("gain", "must be > 0".into());
        }
        if !(0.0..0.5).contains(&self.length_spread) {
            return bad("length_spread", "must lie in [0, 0.5)".into());
        }
        if self.n_train == 0 {
            return bad("n_train", "must be >= 1".into());
        }
        Ok(())
    }
}

/// The per-view maps `x = tanh(A₁ h) + b₁`, `y = tanh(A₂ h) + b₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub a_x: DMatrix<f64>,
    pub b_x: DVector<f64>,
    pub a_y: DMatrix<f64>,
    pub b_y: DVector<f64>,
}

impl ObservationModel {
    pub fn random<R: Rng + ?Sized>(dx: usize, dy: usize, k: usize, gain: f64, rng: &mut R) -> Result<Self> {
        if k == 0 || k > dx.min(dy) {
            return Err(invalid(format!("latent dim {k} must lie in [1, min({dx}, {dy})]")));
        }
        let entry = Normal::new(0.0, gain / (k as f64).sqrt()).map_err(|e| invalid(e.to_string()))?;
        let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| entry.sample(rng));
        let a_x = draw(dx, k);
        let a_y = draw(dy, k);
        let b_x = DVector::from_fn(dx, |_, _| rng.random_range(-0.5..0.5));
        let b_y = DVector::from_fn(dy, |_, _| rng.random_range(-0.5..0.5));
        Ok(Self { a_x, b_x, a_y, b_y })
    }

    fn observe(a: &DMatrix<f64>, b: &DVector<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = a * h;
        for mut col in out.column_iter_mut() {
            col.apply(|v| *v = v.tanh());
            col += b;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub x: FeatureSequence,
    pub y: FeatureSequence,
    /// For each Y frame, the corresponding X frame (1-based).
    pub true_map: Vec<usize>,
    pub seed: u64,
}

fn standardize(clean: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let t = clean.ncols() as f64;
    let mean = clean.column_mean();
    let sd = DVector::from_fn(clean.nrows(), |r, _| {
        let v = (clean.row(r).iter().map(|x| (x - mean[r]).powi(2)).sum::<f64>() / (t - 1.0)).sqrt();
        if v < 1e-12 {
            1.0
        } else {
            v
        }
    });
    (mean, sd)
}

fn normalize_and_corrupt<R: Rng + ?Sized>(
    clean: DMatrix<f64>,
    stats: &(DVector<f64>, DVector<f64>),
    noise: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let mut out = clean;
    for mut col in out.column_iter_mut() {
        col -= &stats.0;
        col.component_div_assign(&stats.1);
    }
    if noise > 0.0 {
        out.apply(|v| *v += noise * rng.sample::<f64, _>(StandardNormal));
    }
    Ok(out)
}

fn spread_length<R: Rng + ?Sized>(base: usize, spread: f64, rng: &mut R) -> usize {
    if spread == 0.0 {
        return base;
    }
    let f = rng.random_range(1.0 - spread..=1.0 + spread);
    ((base as f64 * f).round() as usize).max(2)
}

/// Draws one pair under a fixed observation model.
///
/// Both views are standardized with the moments of their clean observations
/// of the latent trajectory itself, so equal maps give equal views; noise is
/// added afterwards.
pub fn gen_pair<R: Rng + ?Sized>(spec: &BenchmarkSpec, model: &ObservationModel, seed: u64, rng: &mut R) -> Result<SynthPair> {
    spec.validate()?;
    if model.a_x.shape() != (spec.dx, spec.k) || model.a_y.shape() != (spec.dy, spec.k) {
        return Err(invalid("observation model does not match the benchmark dims"));
    }
    let tx = spread_length(spec.tx, spec.length_spread, rng);
    let ty = spread_length(spec.ty, spec.length_spread, rng);
    let h = gen_latent(tx, spec.k, spec.smoothness, rng)?;
    let true_map = gen_warp(tx, ty, spec.jitter, rng)?;
    let warped = h.select_columns(&true_map.iter().map(|i| i - 1).collect::<Vec<_>>());

    let clean_x = ObservationModel::observe(&model.a_x, &model.b_x, &h);
    let stats_x = standardize(&clean_x);
    let stats_y = standardize(&ObservationModel::observe(&model.a_y, &model.b_y, &h));
    let x = normalize_and_corrupt(clean_x, &stats_x, spec.noise, rng)?;
    let y = normalize_and_corrupt(ObservationModel::observe(&model.a_y, &model.b_y, &warped), &stats_y, spec.noise, rng)?;
    Ok(SynthPair { x: FeatureSequence::new(x)?, y: FeatureSequence::new(y)?, true_map, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub model: ObservationModel,
    pub train: Vec<SynthPair>,
    pub test: Vec<SynthPair>,
}

/// Train and test pairs sharing one observation model, all drawn from the
/// data stream of `seed`.
pub fn generate_dataset(spec: &BenchmarkSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream(seed, Stream::Data);
    let model = ObservationModel::random(spec.dx, spec.dy, spec.k, spec.gain, &mut rng)?;
    let train = (0..spec.n_train).map(|_| gen_pair(spec, &model, seed, &mut rng)).collect::<Result<Vec<_>>>()?;
    let test = (0..spec.n_test).map(|_| gen_pair(spec, &model, seed, &mut rng)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { model, train, test })
}

pub fn format_truth_csv(map: &[usize]) -> String {
    let mut out = String::from("y_index,x_index\n");
    for (s, x) in map.iter().enumerate() {
        let _ = writeln!(out, "{s},{}", x - 1);
    }
    out
}

pub fn parse_truth_csv(text: &str) -> Result<Vec<usize>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("y_index,x_index") {
        return Err(Error::Parse("truth file must start with `y_index,x_index`".into()));
    }
    let mut map = Vec::new();
    for (row, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parse = |s: Option<&str>| s.and_then(|v| v.trim().parse::<usize>().ok());
        let mut f = line.split(',');
        match (parse(f.next()), parse(f.next()), f.next()) {
            (Some(s), Some(x), None) if s == map.len() => map.push(x + 1),
            _ => return Err(Error::Parse(format!("bad truth row {}: `{line}`", row + 2))),
        }
    }
    if map.is_empty() {
        return Err(Error::Parse("truth file has no rows".into()));
    }
    Ok(map)
}

/// Writes `x.seq`, `y.seq` and `truth.csv` into `dir`.
pub fn write_pair(dir: &Path, pair: &SynthPair) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_sequence(&dir.join("x.seq"), &pair.x)?;
    write_sequence(&dir.join("y.seq"), &pair.y)?;
    fs::write(dir.join("truth.csv"), format_truth_csv(&pair.true_map))?;
    Ok(())
}

pub fn read_pair(dir: &Path, seed: u64) -> Result<SynthPair> {
    let x = read_sequence(&dir.join("x.seq"))?;
    let y = read_sequence(&dir.join("y.seq"))?;
    let true_map = parse_truth_csv(&fs::read_to_string(dir.join("truth.csv"))?)?;
    if true_map.len() != y.len() || true_map.iter().any(|&i| i == 0 || i > x.len()) {
        return Err(Error::Parse(format!("truth map in {} does not fit its sequences", dir.display())));
    }
    Ok(SynthPair { x, y, true_map, seed })
}

/// Directory of pair `index` of a split (`train` or `test`).
pub fn pair_dir(root: &Path, split: &str, index: usize) -> PathBuf {
    root.join(split).join(format!("pair_{index:03}"))
}

/// Writes every pair under `root/{train,test}/pair_NNN/`.
pub fn write_dataset(root: &Path, data: &Dataset) -> Result<()> {
    for (split, pairs) in [("train", &data.train), ("test", &data.test)] {
        for (i, p) in pairs.iter().enumerate() {
            write_pair(&pair_dir(root, split, i), p)?;
        }
    }
    Ok(())
}

/// Reads the pairs of one split in index order; a missing split is empty.
pub fn read_split(root: &Path, split: &str) -> Result<Vec<SynthPair>> {
    let mut out = Vec::new();
    while pair_dir(root, split, out.len()).is_dir() {
        out.push(read_pair(&pair_dir(root, split, out.len()), 0)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqcore::uniform_init_path;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn latent_is_standardized_and_deterministic() {
        let a = gen_latent(300, 3, 4.0, &mut rng(0)).unwrap();
        assert_eq!(a, gen_latent(300, 3, 4.0, &mut rng(0)).unwrap());
        for r in 0..3 {
            let row = a.row(r);
            let mean = row.sum() / 300.0;
            let sd = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 299.0).sqrt();
            assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn heavy_smoothing_gives_small_increments() {
        let t = 200;
        let h = gen_latent(t, 2, t as f64, &mut rng(1)).unwrap();
        for r in 0..2 {
            for c in 1..t {
                assert!((h[(r, c)] - h[(r, c - 1)]).abs() < 0.05);
            }
        }
    }

    #[test]
    fn zero_jitter_is_uniform_map() {
        for (tx, ty) in [(200, 240), (5, 5), (3, 7), (2, 2), (10, 11)] {
            let map = gen_warp(tx, ty, 0.0, &mut rng(2)).unwrap();
            let uni = uniform_init_path(tx, ty).unwrap();
            // with ty >= tx the uniform path visits each y frame once
            let expected: Vec<usize> = uni.phi_x().to_vec();
            assert_eq!(map, expected, "{tx}x{ty}");
        }
    }

    #[test]
    fn warps_are_monotone_with_pinned_ends() {
        let mut r = rng(3);
        let mut moved = 0;
        for trial in 0..1000 {
            let tx = 2 + trial % 50;
            let ty = 2 + (trial * 7) % 60;
            let map = gen_warp(tx, ty, 0.5, &mut r).unwrap();
            assert_eq!(map.len(), ty);
            assert_eq!((map[0], map[ty - 1]), (1, tx));
            assert!(map.windows(2).all(|w| w[0] <= w[1]));
            let jittered = gen_warp(200, 240, 0.5, &mut r).unwrap();
            let uniform = gen_warp(200, 240, 0.0, &mut r).unwrap();
            moved += (jittered != uniform) as usize;
        }
        assert!(moved >= 999);
    }

    #[test]
    fn symmetric_degeneracy_gives_identical_views() {
        let spec = BenchmarkSpec { dx: 5, dy: 5, k: 3, tx: 30, ty: 30, noise: 0.0, jitter: 0.0, length_spread: 0.0, ..Default::default() };
        let mut m = ObservationModel::random(5, 5, 3, 1.5, &mut rng(4)).unwrap();
        m.a_y = m.a_x.clone();
        m.b_y = m.b_x.clone();
        let p = gen_pair(&spec, &m, 0, &mut rng(5)).unwrap();
        assert_eq!(p.x, p.y);

        let spec = BenchmarkSpec { ty: 40, ..spec };
        let p = gen_pair(&spec, &m, 0, &mut rng(5)).unwrap();
        for (s, &i) in p.true_map.iter().enumerate() {
            assert_eq!(p.y.data().column(s), p.x.data().column(i - 1));
        }
    }

    #[test]
    fn latent_dim_bound_enforced() {
        assert!(ObservationModel::random(4, 6, 5, 1.0, &mut rng(6)).is_err());
        let spec = BenchmarkSpec { k: 13, ..Default::default() };
        assert!(matches!(spec.validate(), Err(Error::Config { key, .. }) if key == "k"));
    }

    #[test]
    fn dataset_is_seed_deterministic() {
        let spec = BenchmarkSpec { tx: 40, ty: 50, n_train: 2, n_test: 1, ..Default::default() };
        let a = generate_dataset(&spec, 9).unwrap();
        assert_eq!(a, generate_dataset(&spec, 9).unwrap());
        assert_ne!(a.train[0].x, generate_dataset(&spec, 10).unwrap().train[0].x);
        assert_eq!(a.train[0].x.dim(), 12);
        assert_eq!(a.train[0].y.dim(), 25);
    }

    #[test]
    fn files_roundtrip() {
        let spec = BenchmarkSpec { tx: 20, ty: 25, n_train: 2, n_test: 1, ..Default::default() };
        let data = generate_dataset(&spec, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data).unwrap();
        let train = read_split(dir.path(), "train").unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train[1].true_map, data.train[1].true_map);
        let back = &train[0].x;
        assert!((back.data() - data.train[0].x.data()).amax() == 0.0);
        assert_eq!(read_split(dir.path(), "test").unwrap().len(), 1);
        assert!(parse_truth_csv("y_index,x_index\n0,0\n2,1\n").is_err());
    }
}
