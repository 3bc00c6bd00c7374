use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use super::alignment::{pooled_alignment_error, AlignmentError};
use super::downstream::{path_frame_pairs, regression_mse, truth_frame_pairs, FramePairs, RegressorConfig};
use crate::align::{ctw_fit, transience_fit, TrainConfig, TrainRun};
use crate::error::{invalid, Error, Result};
use crate::losses::{Dependence, LossConfig};
use crate::seqcore::{uniform_init_path, FeatureSequence, FittedPipeline, PipelineConfig, WarpingPathPair};
use crate::synth::{generate_dataset, BenchmarkSpec, Dataset, SynthPair};

/// One alignment method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// The initial uniform paths, without training.
    Uniform,
    Ctw,
    /// `private` implies the autoencoder.
    Transience { dependence: Dependence, autoencoder: bool, private: bool },
}

impl Variant {
    pub fn transience(dependence: Dependence) -> Self {
        Variant::Transience { dependence, autoencoder: false, private: false }
    }

    pub fn is_contrastive(&self) -> bool {
        matches!(self, Variant::Transience { dependence: Dependence::Contrastive, .. })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Uniform => f.write_str("uniform"),
            Variant::Ctw => f.write_str("ctw"),
            Variant::Transience { dependence, autoencoder, private } => {
                write!(f, "{dependence}")?;
                if *private {
                    f.write_str("+priv")
                } else if *autoencoder {
                    f.write_str("+autoenc")
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => return Ok(Variant::Uniform),
            "ctw" => return Ok(Variant::Ctw),
            _ => {}
        }
        let mut parts = s.split('+');
        let dependence: Dependence = parts.next().unwrap_or_default().parse()?;
        let (mut autoencoder, mut private) = (false, false);
        for p in parts {
            match p {
                "autoenc" => autoencoder = true,
                "priv" => private = true,
                _ => return Err(invalid(format!("unknown variant modifier `+{p}` in `{s}`"))),
            }
        }
        Ok(Variant::Transience { dependence, autoencoder: autoencoder || private, private })
    }
}

/// Everything besides the benchmark spec that a comparison run needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSettings {
    /// Base loss settings; dependence and switches come from each variant.
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
    pub regressor: RegressorConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub variant: String,
    pub seed: u64,
    pub error: AlignmentError,
    /// Final total DTW cost; NaN for the untrained uniform paths.
    pub dtw_cost: f64,
    pub downstream_mse: f64,
    pub oracle_mse: f64,
    /// Wall-clock seconds spent aligning; not part of the CSV.
    pub align_seconds: f64,
}

/// Preprocessed training pairs for the fitters.
pub fn prepare_features(data: &Dataset, pipeline: &PipelineConfig) -> Result<Vec<(FeatureSequence, FeatureSequence)>> {
    let fitted = FittedPipeline::fit(pipeline, data.train.iter().map(|p| (&p.x, &p.y)))?;
    data.train.iter().map(|p| Ok((fitted.apply_x(&p.x)?, fitted.apply_y(&p.y)?))).collect()
}

/// Aligns the training pairs with one variant. Returns the paths, the final
/// DTW cost and the run, when there is one.
pub fn run_variant(
    variant: Variant,
    features: &[(FeatureSequence, FeatureSequence)],
    settings: &EvalSettings,
    seed: u64,
) -> Result<(Vec<WarpingPathPair>, f64, Option<TrainRun>)> {
    let train = TrainConfig { seed, ..settings.train.clone() };
    let run = match variant {
        Variant::Uniform => {
            let paths = features.iter().map(|(x, y)| uniform_init_path(x.len(), y.len())).collect::<Result<_>>()?;
            return Ok((paths, f64::NAN, None));
        }
        Variant::Ctw => ctw_fit(features, &train)?,
        Variant::Transience { dependence, autoencoder, private } => {
            let loss = LossConfig { dependence, use_autoencoder: autoencoder, use_private: private, ..settings.loss.clone() };
            transience_fit(features, &loss, &train)?
        }
    };
    Ok((run.paths.clone(), run.final_cost(), Some(run)))
}

fn views(pairs: &[SynthPair]) -> Vec<(&FeatureSequence, &FeatureSequence)> {
    pairs.iter().map(|p| (&p.x, &p.y)).collect()
}

/// Runs every variant on the dataset of one seed.
pub fn evaluate_seed(spec: &BenchmarkSpec, variants: &[Variant], seed: u64, settings: &EvalSettings) -> Result<Vec<AlignmentReport>> {
    let data = generate_dataset(spec, seed)?;
    evaluate_dataset(&data.train, &data.test, variants, seed, settings)
}

/// Runs every variant on given train/test pairs; `seed` drives training and
/// the regressors.
pub fn evaluate_dataset(
    train: &[SynthPair],
    test: &[SynthPair],
    variants: &[Variant],
    seed: u64,
    settings: &EvalSettings,
) -> Result<Vec<AlignmentReport>> {
    let fitted = FittedPipeline::fit(&settings.pipeline, train.iter().map(|p| (&p.x, &p.y)))?;
    let features = train.iter().map(|p| Ok((fitted.apply_x(&p.x)?, fitted.apply_y(&p.y)?))).collect::<Result<Vec<_>>>()?;
    let train_views = views(train);
    let test_views = views(test);
    let test_pairs: Vec<FramePairs> = test.iter().map(|p| truth_frame_pairs(&p.true_map)).collect();
    if test_pairs.is_empty() {
        return Err(Error::Config { key: "n_test".into(), message: "evaluation needs at least one test pair".into() });
    }
    let oracle_pairs: Vec<FramePairs> = train.iter().map(|p| truth_frame_pairs(&p.true_map)).collect();
    let oracle_mse = regression_mse(&train_views, &oracle_pairs, &test_views, &test_pairs, &settings.regressor, seed)?;

    let mut reports = Vec::with_capacity(variants.len());
    for &variant in variants {
        let start = Instant::now();
        let (paths, dtw_cost, _) = run_variant(variant, &features, settings, seed)?;
        let align_seconds = start.elapsed().as_secs_f64();
        let error = pooled_alignment_error(paths.iter().zip(train).map(|(p, d)| (p, d.true_map.as_slice())))?;
        let train_pairs: Vec<FramePairs> = paths.iter().map(path_frame_pairs).collect();
        let downstream_mse = regression_mse(&train_views, &train_pairs, &test_views, &test_pairs, &settings.regressor, seed)?;
        log::info!("seed {seed} {variant}: mean dev {:.3} mse {downstream_mse:.5} ({align_seconds:.1}s)", error.mean_abs_deviation);
        reports.push(AlignmentReport { variant: variant.to_string(), seed, error, dtw_cost, downstream_mse, oracle_mse, align_seconds });
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub variant: String,
    pub median_mean_abs_dev: f64,
    pub median_downstream_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reports: Vec<AlignmentReport>,
    /// Variants ordered by median mean deviation over seeds, best first.
    pub ranking: Vec<RankEntry>,
    /// Whether a contrastive variant heads the ranking.
    pub contrastive_first: bool,
}

impl Comparison {
    pub fn from_reports(reports: Vec<AlignmentReport>) -> Self {
        let ranking = rank(&reports);
        let contrastive_first =
            ranking.first().and_then(|r| r.variant.parse::<Variant>().ok()).is_some_and(|v| v.is_contrastive());
        Self { reports, ranking, contrastive_first }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Median ranking of the variants appearing in `reports`.
pub fn rank(reports: &[AlignmentReport]) -> Vec<RankEntry> {
    let mut labels: Vec<&str> = Vec::new();
    for r in reports {
        if !labels.contains(&r.variant.as_str()) {
            labels.push(&r.variant);
        }
    }
    let mut ranking: Vec<RankEntry> = labels
        .into_iter()
        .map(|label| {
            let rows: Vec<&AlignmentReport> = reports.iter().filter(|r| r.variant == label).collect();
            RankEntry {
                variant: label.to_string(),
                median_mean_abs_dev: median(&rows.iter().map(|r| r.error.mean_abs_deviation).collect::<Vec<_>>()),
                median_downstream_mse: median(&rows.iter().map(|r| r.downstream_mse).collect::<Vec<_>>()),
            }
        })
        .collect();
    ranking.sort_by(|a, b| a.median_mean_abs_dev.total_cmp(&b.median_mean_abs_dev).then_with(|| a.variant.cmp(&b.variant)));
    ranking
}

pub fn compare_variants(spec: &BenchmarkSpec, variants: &[Variant], seeds: &[u64], settings: &EvalSettings) -> Result<Comparison> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(invalid("comparison needs at least one variant and one seed"));
    }
    let mut reports = Vec::new();
    for &seed in seeds {
        reports.extend(evaluate_seed(spec, variants, seed, settings)?);
    }
    Ok(Comparison::from_reports(reports))
}

pub const REPORT_HEADER: &str = "variant,seed,mean_abs_dev,median_abs_dev,pct_within_3,dtw_cost,downstream_mse,oracle_mse";

pub fn report_csv(reports: &[AlignmentReport]) -> String {
    let mut out = String::new();
    out.push_str("# proxy metrics: frame deviation from the generator's true warp and x->y regression MSE on held-out frames\n");
    out.push_str("# these are not spectral-distortion or listening-test scores\n");
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.variant,
            r.seed,
            r.error.mean_abs_deviation,
            r.error.median_abs_deviation,
            r.error.pct_within_3,
            r.dtw_cost,
            r.downstream_mse,
            r.oracle_mse
        );
    }
    out
}

pub fn ranking_csv(c: &Comparison) -> String {
    let mut out = String::from("rank,variant,median_mean_abs_dev,median_downstream_mse\n");
    for (i, r) in c.ranking.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, r.variant, r.median_mean_abs_dev, r.median_downstream_mse);
    }
    let _ = writeln!(out, "# contrastive_first={}", c.contrastive_first);
    out
}
