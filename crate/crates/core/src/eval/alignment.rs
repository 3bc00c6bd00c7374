use crate::error::{invalid, Result};
use crate::seqcore::WarpingPathPair;

/// Frame-deviation summary of one or more alignments against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentError {
    pub mean_abs_deviation: f64,
    pub median_abs_deviation: f64,
    /// Fraction of Y frames within 3 frames of the true X frame.
    pub pct_within_3: f64,
}

/// For each Y frame (in order), the mean 1-based X index aligned to it.
pub fn path_to_correspondence(path: &WarpingPathPair) -> Vec<f64> {
    let ty = path.end().1;
    let mut sum = vec![0.0; ty];
    let mut count = vec![0usize; ty];
    for (&i, &j) in path.phi_x().iter().zip(path.phi_y()) {
        sum[j - 1] += i as f64;
        count[j - 1] += 1;
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

/// Absolute deviations, in frames, between the path's correspondence and `truth`.
pub fn deviations(path: &WarpingPathPair, truth: &[usize]) -> Result<Vec<f64>> {
    let corr = path_to_correspondence(path);
    if corr.len() != truth.len() {
        return Err(invalid(format!("path covers {} Y frames but truth has {}", corr.len(), truth.len())));
    }
    Ok(corr.iter().zip(truth).map(|(c, &t)| (c - t as f64).abs()).collect())
}

pub fn summarize(devs: &[f64]) -> Result<AlignmentError> {
    if devs.is_empty() {
        return Err(invalid("no deviations to summarize"));
    }
    let n = devs.len() as f64;
    let mut sorted = devs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    Ok(AlignmentError {
        mean_abs_deviation: devs.iter().sum::<f64>() / n,
        median_abs_deviation: median,
        pct_within_3: devs.iter().filter(|&&d| d <= 3.0).count() as f64 / n,
    })
}

pub fn alignment_error(path: &WarpingPathPair, truth: &[usize]) -> Result<AlignmentError> {
    summarize(&deviations(path, truth)?)
}

/// Pools the deviations of several pairs before summarizing.
pub fn pooled_alignment_error<'a>(items: impl IntoIterator<Item = (&'a WarpingPathPair, &'a [usize])>) -> Result<AlignmentError> {
    let mut all = Vec::new();
    for (p, t) in items {
        all.extend(deviations(p, t)?);
    }
    summarize(&all)
}
