//! Flat `key = value` run configuration shared by every subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{EvalSettings, Variant};
use crate::synth::BenchmarkSpec;

/// Which fitter `train` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMethod {
    Transience,
    Ctw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub settings: EvalSettings,
    pub spec: BenchmarkSpec,
    pub seed: u64,
    /// Number of consecutive seeds, starting at `seed`, that `eval` runs.
    pub seeds: usize,
    pub method: TrainMethod,
    pub variants: Vec<Variant>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub grad_trials: usize,
    pub grad_tolerance: f64,
    pub dtw_trials: usize,
    pub dtw_max_side: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            settings: EvalSettings::default(),
            spec: BenchmarkSpec::default(),
            seed: 0,
            seeds: 5,
            method: TrainMethod::Transience,
            variants: ["contrastive", "cca", "mmi", "ctw", "uniform"].iter().map(|v| v.parse().expect("known label")).collect(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            grad_trials: 5,
            grad_tolerance: 1e-4,
            dtw_trials: 200,
            dtw_max_side: 6,
        }
    }
}

/// Every accepted key with a one-line description, in `--help` order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed for every random stream"),
    ("seeds", "eval: number of consecutive seeds starting at `seed`"),
    ("data_dir", "dataset root read by train (and eval --data)"),
    ("out_dir", "directory receiving all outputs"),
    ("method", "train: transience | ctw"),
    ("variants", "eval: comma list of uniform, ctw, cca, mmi, contrastive with optional +autoenc / +priv"),
    ("loss", "dependence term: cca | mmi | contrastive"),
    ("margin", "contrastive hinge margin"),
    ("lambda", "reconstruction weight"),
    ("kappa", "KL weight on the private codes"),
    ("cca_regularizer", "ridge added to the CCA covariances"),
    ("mmi_mode", "MMI estimator: literal | sample_mean"),
    ("use_autoencoder", "train decoders with a reconstruction loss"),
    ("use_private", "add private encoders with a KL loss (needs use_autoencoder)"),
    ("bandwidth_init", "initial KDE bandwidth for MMI"),
    ("latent_dim", "shared latent dimension"),
    ("private_dim", "private latent dimension"),
    ("hidden", "hidden widths of every network, comma separated"),
    ("slope", "leaky ReLU slope"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("eps", "Adam denominator guard"),
    ("batch_size", "minibatch size in phase 1"),
    ("epochs", "passes over the aligned frames per phase 1"),
    ("max_outer", "maximum outer iterations"),
    ("threshold", "stop when fewer than this fraction of path cells change"),
    ("metric", "DTW frame distance: cosine | euclidean"),
    ("noise_sigma", "std of the denoising corruption on reconstruction inputs"),
    ("ctw_regularizer", "ridge added to the CTW covariances"),
    ("context_width", "odd context window on the first view; 1 disables"),
    ("pca_retained", "PCA components kept after context stacking; 0 disables"),
    ("deltas", "append delta and acceleration features to the second view"),
    ("regressor_hidden", "downstream regressor hidden widths"),
    ("regressor_lr", "downstream regressor learning rate"),
    ("regressor_batch_size", "downstream regressor minibatch size"),
    ("regressor_epochs", "downstream regressor epochs"),
    ("dx", "benchmark: first view dimension"),
    ("dy", "benchmark: second view dimension"),
    ("k", "benchmark: latent dimension"),
    ("tx", "benchmark: nominal first view length"),
    ("ty", "benchmark: nominal second view length"),
    ("noise", "benchmark: observation noise std"),
    ("jitter", "benchmark: warp increment jitter in [0, 1)"),
    ("smoothness", "benchmark: latent smoothing std in frames"),
    ("gain", "benchmark: observation map gain"),
    ("length_spread", "benchmark: relative spread of sequence lengths"),
    ("n_train", "benchmark: training pairs"),
    ("n_test", "benchmark: held-out pairs"),
    ("grad_trials", "gradcheck: random problems per entry"),
    ("grad_tolerance", "gradcheck: maximum relative error"),
    ("dtw_trials", "dtw-test: random matrices per shape"),
    ("dtw_max_side", "dtw-test: largest side checked"),
];

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.into(), message: message.into() }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| config_error(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(config_error(key, format!("expected true or false, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Current value of `key` in the same syntax [`RunConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let s = &self.settings;
        let sp = &self.spec;
        Ok(match key {
            "seed" => self.seed.to_string(),
            "seeds" => self.seeds.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "method" => match self.method {
                TrainMethod::Transience => "transience".into(),
                TrainMethod::Ctw => "ctw".into(),
            },
            "variants" => join(&self.variants),
            "loss" => s.loss.dependence.to_string(),
            "margin" => s.loss.margin.to_string(),
            "lambda" => s.loss.lambda.to_string(),
            "kappa" => s.loss.kappa.to_string(),
            "cca_regularizer" => s.loss.cca_regularizer.to_string(),
            "mmi_mode" => s.loss.mmi_mode.to_string(),
            "use_autoencoder" => s.loss.use_autoencoder.to_string(),
            "use_private" => s.loss.use_private.to_string(),
            "bandwidth_init" => s.loss.bandwidth_init.to_string(),
            "latent_dim" => s.train.stack.latent_dim.to_string(),
            "private_dim" => s.train.stack.private_dim.to_string(),
            "hidden" => join(&s.train.stack.hidden),
            "slope" => s.train.stack.slope.to_string(),
            "lr" => s.train.adam.lr.to_string(),
            "beta1" => s.train.adam.beta1.to_string(),
            "beta2" => s.train.adam.beta2.to_string(),
            "eps" => s.train.adam.eps.to_string(),
            "batch_size" => s.train.batch_size.to_string(),
            "epochs" => s.train.epochs.to_string(),
            "max_outer" => s.train.max_outer.to_string(),
            "threshold" => s.train.threshold.to_string(),
            "metric" => s.train.metric.to_string(),
            "noise_sigma" => s.train.noise_sigma.to_string(),
            "ctw_regularizer" => s.train.ctw_regularizer.to_string(),
            "context_width" => s.pipeline.context_width.to_string(),
            "pca_retained" => s.pipeline.pca_retained.to_string(),
            "deltas" => s.pipeline.deltas.to_string(),
            "regressor_hidden" => join(&s.regressor.hidden),
            "regressor_lr" => s.regressor.lr.to_string(),
            "regressor_batch_size" => s.regressor.batch_size.to_string(),
            "regressor_epochs" => s.regressor.epochs.to_string(),
            "dx" => sp.dx.to_string(),
            "dy" => sp.dy.to_string(),
            "k" => sp.k.to_string(),
            "tx" => sp.tx.to_string(),
            "ty" => sp.ty.to_string(),
            "noise" => sp.noise.to_string(),
            "jitter" => sp.jitter.to_string(),
            "smoothness" => sp.smoothness.to_string(),
            "gain" => sp.gain.to_string(),
            "length_spread" => sp.length_spread.to_string(),
            "n_train" => sp.n_train.to_string(),
            "n_test" => sp.n_test.to_string(),
            "grad_trials" => self.grad_trials.to_string(),
            "grad_tolerance" => self.grad_tolerance.to_string(),
            "dtw_trials" => self.dtw_trials.to_string(),
            "dtw_max_side" => self.dtw_max_side.to_string(),
            _ => return Err(config_error(key, "unknown key")),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let s = &mut self.settings;
        let sp = &mut self.spec;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "seeds" => self.seeds = parse(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "method" => {
                self.method = match v {
                    "transience" => TrainMethod::Transience,
                    "ctw" => TrainMethod::Ctw,
                    _ => return Err(config_error(key, format!("expected transience or ctw, got `{v}`"))),
                }
            }
            "variants" => self.variants = parse_list(key, v)?,
            "loss" => s.loss.dependence = parse(key, v)?,
            "margin" => s.loss.margin = parse(key, v)?,
            "lambda" => s.loss.lambda = parse(key, v)?,
            "kappa" => s.loss.kappa = parse(key, v)?,
            "cca_regularizer" => s.loss.cca_regularizer = parse(key, v)?,
            "mmi_mode" => s.loss.mmi_mode = parse(key, v)?,
            "use_autoencoder" => s.loss.use_autoencoder = parse_bool(key, v)?,
            "use_private" => s.loss.use_private = parse_bool(key, v)?,
            "bandwidth_init" => s.loss.bandwidth_init = parse(key, v)?,
            "latent_dim" => s.train.stack.latent_dim = parse(key, v)?,
            "private_dim" => s.train.stack.private_dim = parse(key, v)?,
            "hidden" => s.train.stack.hidden = parse_list(key, v)?,
            "slope" => s.train.stack.slope = parse(key, v)?,
            "lr" => s.train.adam.lr = parse(key, v)?,
            "beta1" => s.train.adam.beta1 = parse(key, v)?,
            "beta2" => s.train.adam.beta2 = parse(key, v)?,
            "eps" => s.train.adam.eps = parse(key, v)?,
            "batch_size" => s.train.batch_size = parse(key, v)?,
            "epochs" => s.train.epochs = parse(key, v)?,
            "max_outer" => s.train.max_outer = parse(key, v)?,
            "threshold" => s.train.threshold = parse(key, v)?,
            "metric" => s.train.metric = parse(key, v)?,
            "noise_sigma" => s.train.noise_sigma = parse(key, v)?,
            "ctw_regularizer" => s.train.ctw_regularizer = parse(key, v)?,
            "context_width" => s.pipeline.context_width = parse(key, v)?,
            "pca_retained" => s.pipeline.pca_retained = parse(key, v)?,
            "deltas" => s.pipeline.deltas = parse_bool(key, v)?,
            "regressor_hidden" => s.regressor.hidden = parse_list(key, v)?,
            "regressor_lr" => s.regressor.lr = parse(key, v)?,
            "regressor_batch_size" => s.regressor.batch_size = parse(key, v)?,
            "regressor_epochs" => s.regressor.epochs = parse(key, v)?,
            "dx" => sp.dx = parse(key, v)?,
            "dy" => sp.dy = parse(key, v)?,
            "k" => sp.k = parse(key, v)?,
            "tx" => sp.tx = parse(key, v)?,
            "ty" => sp.ty = parse(key, v)?,
            "noise" => sp.noise = parse(key, v)?,
            "jitter" => sp.jitter = parse(key, v)?,
            "smoothness" => sp.smoothness = parse(key, v)?,
            "gain" => sp.gain = parse(key, v)?,
            "length_spread" => sp.length_spread = parse(key, v)?,
            "n_train" => sp.n_train = parse(key, v)?,
            "n_test" => sp.n_test = parse(key, v)?,
            "grad_trials" => self.grad_trials = parse(key, v)?,
            "grad_tolerance" => self.grad_tolerance = parse(key, v)?,
            "dtw_trials" => self.dtw_trials = parse(key, v)?,
            "dtw_max_side" => self.dtw_max_side = parse(key, v)?,
            _ => return Err(config_error(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies a `key=value` assignment.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| config_error(assignment.trim(), "expected key=value"))?;
        self.set(key.trim(), value)
    }

    /// Applies a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if !line.is_empty() {
                self.apply(line)?;
            }
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&fs::read_to_string(path)?)
    }

    /// Checks cross-field constraints of every section.
    pub fn validate(&self) -> Result<()> {
        self.settings.loss.validate()?;
        self.settings.train.validate()?;
        self.spec.validate()?;
        let p = &self.settings.pipeline;
        if p.context_width == 0 || p.context_width % 2 == 0 {
            return Err(config_error("context_width", "must be an odd positive integer"));
        }
        let r = &self.settings.regressor;
        if !(r.lr > 0.0) {
            return Err(config_error("regressor_lr", "must be > 0"));
        }
        if r.batch_size == 0 {
            return Err(config_error("regressor_batch_size", "must be >= 1"));
        }
        if r.epochs == 0 {
            return Err(config_error("regressor_epochs", "must be >= 1"));
        }
        if self.seeds == 0 {
            return Err(config_error("seeds", "must be >= 1"));
        }
        if self.variants.is_empty() {
            return Err(config_error("variants", "must list at least one variant"));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(config_error("grad_tolerance", "must be > 0"));
        }
        if self.grad_trials == 0 {
            return Err(config_error("grad_trials", "must be >= 1"));
        }
        if self.dtw_max_side == 0 || self.dtw_max_side > crate::align::BRUTE_FORCE_MAX {
            return Err(config_error("dtw_max_side", format!("must lie in 1..={}", crate::align::BRUTE_FORCE_MAX)));
        }
        Ok(())
    }

    /// Text listing every key with its default value.
    pub fn describe_keys() -> String {
        let defaults = RunConfig::default();
        let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::from("Config keys (set in --config files or with --set key=value), with defaults:\n");
        for (key, help) in KEYS {
            let value = defaults.get(key).expect("every listed key is readable");
            let _ = writeln!(out, "  {key:<width$}  {help} [default: {value}]");
        }
        out
    }
}
