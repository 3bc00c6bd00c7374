use nalgebra::DMatrix;

use super::{add_deltas, context_window, pca_apply, pca_fit, FeatureSequence, PcaModel, ZScore};
use crate::error::{invalid, Result};

/// Preprocessing of the two views before training: context windows and PCA
/// on the first view, delta features on the second, z-scoring on both.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Odd window width; 1 disables stacking.
    pub context_width: usize,
    /// Principal components kept after stacking; 0 disables PCA. Clamped to
    /// the available rank.
    pub pca_retained: usize,
    pub deltas: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { context_width: 11, pca_retained: 30, deltas: true }
    }
}

/// A pipeline with its statistics fitted on training sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub pca: Option<PcaModel>,
    pub zscore_x: ZScore,
    pub zscore_y: ZScore,
}

fn concat(seqs: &[FeatureSequence]) -> Result<FeatureSequence> {
    let dim = seqs.first().ok_or_else(|| invalid("no sequences to fit on"))?.dim();
    let total = seqs.iter().map(FeatureSequence::len).sum();
    let mut out = DMatrix::zeros(dim, total);
    let mut at = 0;
    for s in seqs {
        out.columns_mut(at, s.len()).copy_from(s.data());
        at += s.len();
    }
    FeatureSequence::new(out)
}

impl FittedPipeline {
    fn stack_x(config: &PipelineConfig, x: &FeatureSequence) -> Result<FeatureSequence> {
        context_window(x, config.context_width)
    }

    fn expand_y(config: &PipelineConfig, y: &FeatureSequence) -> FeatureSequence {
        if config.deltas {
            add_deltas(y)
        } else {
            y.clone()
        }
    }

    pub fn fit<'a>(config: &PipelineConfig, pairs: impl IntoIterator<Item = (&'a FeatureSequence, &'a FeatureSequence)>) -> Result<Self> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (x, y) in pairs {
            xs.push(Self::stack_x(config, x)?);
            ys.push(Self::expand_y(config, y));
        }
        let pooled_x = concat(&xs)?;
        let pooled_y = concat(&ys)?;
        let pca = if config.pca_retained > 0 {
            let rank = (pooled_x.len() - 1).min(pooled_x.dim());
            Some(pca_fit(pooled_x.data(), config.pca_retained.min(rank))?)
        } else {
            None
        };
        let projected = match &pca {
            Some(m) => FeatureSequence::new(pca_apply(m, pooled_x.data())?)?,
            None => pooled_x,
        };
        Ok(Self { config: config.clone(), pca, zscore_x: ZScore::fit(&projected)?, zscore_y: ZScore::fit(&pooled_y)? })
    }

    pub fn apply_x(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        let stacked = Self::stack_x(&self.config, x)?;
        let projected = match &self.pca {
            Some(m) => FeatureSequence::new(pca_apply(m, stacked.data())?)?,
            None => stacked,
        };
        self.zscore_x.apply(&projected)
    }

    pub fn apply_y(&self, y: &FeatureSequence) -> Result<FeatureSequence> {
        self.zscore_y.apply(&Self::expand_y(&self.config, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(d: usize, t: usize, f: impl Fn(usize, usize) -> f64) -> FeatureSequence {
        FeatureSequence::new(DMatrix::from_fn(d, t, f)).unwrap()
    }

    #[test]
    fn output_dims_follow_config() {
        let x = seq(3, 50, |r, c| ((r + 1) as f64 * c as f64 * 0.37).sin());
        let y = seq(2, 60, |r, c| ((r + 2) as f64 * c as f64 * 0.11).cos());
        let p = FittedPipeline::fit(&PipelineConfig { context_width: 5, pca_retained: 4, deltas: true }, [(&x, &y)]).unwrap();
        assert_eq!(p.apply_x(&x).unwrap().dim(), 4);
        assert_eq!(p.apply_y(&y).unwrap().dim(), 6);
        // PCA clamps to the stacked dimension
        let p = FittedPipeline::fit(&PipelineConfig { context_width: 1, pca_retained: 30, deltas: false }, [(&x, &y)]).unwrap();
        assert_eq!(p.apply_x(&x).unwrap().dim(), 3);
        assert_eq!(p.apply_y(&y).unwrap().dim(), 2);
    }

    #[test]
    fn training_features_are_standardized() {
        let x = seq(2, 80, |r, c| (c as f64 * 0.2 + r as f64).sin() * 3.0 + 1.0);
        let y = seq(2, 80, |r, c| (c as f64 * 0.3).cos() * (r + 1) as f64);
        let p = FittedPipeline::fit(&PipelineConfig::default(), [(&x, &y)]).unwrap();
        let fx = p.apply_x(&x).unwrap();
        for r in 0..fx.dim() {
            assert!(fx.data().row(r).mean().abs() < 1e-9);
        }
    }
}
