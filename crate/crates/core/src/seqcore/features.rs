use nalgebra::{DMatrix, DVector};

use super::FeatureSequence;
use crate::error::{invalid, Result};

const VARIANCE_FLOOR: f64 = 1e-12;

/// Stacks static, delta (`[-1, 0, 1] / 2`) and acceleration (`[1, -2, 1]`)
/// features with replicated edges. Output has `3 * dim` rows.
pub fn add_deltas(x: &FeatureSequence) -> FeatureSequence {
    let (d, t) = (x.dim(), x.len());
    let src = x.data();
    let mut out = DMatrix::zeros(3 * d, t);
    for c in 0..t {
        let prev = src.column(c.saturating_sub(1));
        let next = src.column((c + 1).min(t - 1));
        let cur = src.column(c);
        for r in 0..d {
            out[(r, c)] = cur[r];
            out[(d + r, c)] = 0.5 * (next[r] - prev[r]);
            out[(2 * d + r, c)] = next[r] - 2.0 * cur[r] + prev[r];
        }
    }
    FeatureSequence { data: out }
}

/// Per-dimension mean and scale of a standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore {
    pub mean: DVector<f64>,
    /// Divisor applied after centering; 1 for (near-)constant dimensions.
    pub scale: DVector<f64>,
}

impl ZScore {
    pub fn fit(x: &FeatureSequence) -> Result<Self> {
        let t = x.len();
        if t < 2 {
            return Err(invalid("z-score needs at least 2 frames"));
        }
        let data = x.data();
        let mean = data.column_mean();
        let mut scale = DVector::from_element(x.dim(), 1.0);
        for r in 0..x.dim() {
            let var = data.row(r).iter().map(|v| (v - mean[r]).powi(2)).sum::<f64>() / (t - 1) as f64;
            let sd = var.sqrt();
            if sd >= VARIANCE_FLOOR {
                scale[r] = sd;
            }
        }
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &FeatureSequence) -> Result<FeatureSequence> {
        if x.dim() != self.mean.len() {
            return Err(invalid(format!(
                "z-score fitted on dim {} applied to dim {}",
                self.mean.len(),
                x.dim()
            )));
        }
        let mut data = x.data().clone();
        for mut col in data.column_iter_mut() {
            col -= &self.mean;
            col.component_div_assign(&self.scale);
        }
        Ok(FeatureSequence { data })
    }
}

/// Standardizes every dimension to zero mean and unit (sample) std.
pub fn zscore_fit_apply(x: &FeatureSequence) -> Result<(FeatureSequence, ZScore)> {
    let z = ZScore::fit(x)?;
    Ok((z.apply(x)?, z))
}

/// Stacks frames `t - (w-1)/2 ..= t + (w-1)/2` (edges replicated) into each
/// output column, earliest frame first.
pub fn context_window(x: &FeatureSequence, width: usize) -> Result<FeatureSequence> {
    if width == 0 || width % 2 == 0 {
        return Err(invalid(format!("context width must be odd and positive, got {width}")));
    }
    let (d, t) = (x.dim(), x.len());
    let half = (width / 2) as isize;
    let src = x.data();
    let mut out = DMatrix::zeros(width * d, t);
    for c in 0..t {
        for (k, off) in (-half..=half).enumerate() {
            let s = (c as isize + off).clamp(0, t as isize - 1) as usize;
            out.view_mut((k * d, c), (d, 1)).copy_from(&src.column(s));
        }
    }
    Ok(FeatureSequence { data: out })
}
