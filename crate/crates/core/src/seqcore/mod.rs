//! Sequence containers, warping paths and the feature pipeline.
//!
//! Sequences are stored column-per-frame (`dim × len`). Warping paths use the
//! 1-based frame indices of the mathematical model; the CSV serialization in
//! [`io`] is 0-based.

mod features;
pub mod io;
mod pca;
mod pipeline;

pub use features::{add_deltas, context_window, zscore_fit_apply, ZScore};
pub use pca::{pca_apply, pca_fit, PcaModel};
pub use pipeline::{FittedPipeline, PipelineConfig};

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// A `dim × len` matrix of per-frame feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: DMatrix<f64>,
}

impl FeatureSequence {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(invalid(format!(
                "sequence must have dim >= 1 and length >= 1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite entry at frame {}, dim {}",
                pos / data.nrows(),
                pos % data.nrows()
            )));
        }
        Ok(Self { data })
    }

    /// Builds a sequence from frame vectors.
    pub fn from_frames(frames: &[Vec<f64>]) -> Result<Self> {
        let dim = frames.first().map_or(0, |f| f.len());
        if frames.iter().any(|f| f.len() != dim) {
            return Err(invalid("frames have inconsistent dimensions"));
        }
        let flat: Vec<f64> = frames.iter().flatten().copied().collect();
        Self::new(DMatrix::from_column_slice(dim, frames.len(), &flat))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }
}

/// A pair of warping functions mapping both sequences onto a common time axis.
///
/// Indices are 1-based. Consecutive steps advance by `(0,1)`, `(1,0)` or
/// `(1,1)`, and the path runs from `(1,1)` to `(T_x, T_y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpingPathPair {
    phi_x: Vec<usize>,
    phi_y: Vec<usize>,
}

impl WarpingPathPair {
    /// Validates the boundary and step invariants against sequence lengths
    /// `tx` and `ty`.
    pub fn new(phi_x: Vec<usize>, phi_y: Vec<usize>, tx: usize, ty: usize) -> Result<Self> {
        let path = Self { phi_x, phi_y };
        path.validate(tx, ty)?;
        Ok(path)
    }

    /// Builds a path from 0-based `(i, j)` cells.
    pub fn from_cells(cells: &[(usize, usize)], tx: usize, ty: usize) -> Result<Self> {
        let (phi_x, phi_y) = cells.iter().map(|&(i, j)| (i + 1, j + 1)).unzip();
        Self::new(phi_x, phi_y, tx, ty)
    }

    pub fn validate(&self, tx: usize, ty: usize) -> Result<()> {
        let n = self.phi_x.len();
        if n == 0 || n != self.phi_y.len() {
            return Err(invalid("warping path must be non-empty with equal-length index sequences"));
        }
        if self.phi_x[0] != 1 || self.phi_y[0] != 1 {
            return Err(invalid("warping path must start at (1, 1)"));
        }
        if self.phi_x[n - 1] != tx || self.phi_y[n - 1] != ty {
            return Err(invalid(format!(
                "warping path ends at ({}, {}) but sequences have lengths ({tx}, {ty})",
                self.phi_x[n - 1],
                self.phi_y[n - 1]
            )));
        }
        for t in 1..n {
            let dx = self.phi_x[t].wrapping_sub(self.phi_x[t - 1]);
            let dy = self.phi_y[t].wrapping_sub(self.phi_y[t - 1]);
            if !matches!((dx, dy), (0, 1) | (1, 0) | (1, 1)) {
                return Err(invalid(format!("illegal warping step at t = {}", t + 1)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.phi_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_x.is_empty()
    }

    pub fn phi_x(&self) -> &[usize] {
        &self.phi_x
    }

    pub fn phi_y(&self) -> &[usize] {
        &self.phi_y
    }

    /// Final cell, i.e. the sequence lengths the path was built for.
    pub fn end(&self) -> (usize, usize) {
        (self.phi_x[self.len() - 1], self.phi_y[self.len() - 1])
    }

    /// 0-based `(i, j)` cells along the path.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.phi_x.iter().zip(&self.phi_y).map(|(&i, &j)| (i - 1, j - 1))
    }
}

/// Uniform initial alignment: `phi_t = 1 + ceil((t-1)/(T-1) * (T_seq - 1))`
/// with `T = max(T_x, T_y)`.
pub fn uniform_init_path(tx: usize, ty: usize) -> Result<WarpingPathPair> {
    if tx == 0 || ty == 0 {
        return Err(invalid(format!("sequence lengths must be positive, got ({tx}, {ty})")));
    }
    let t = tx.max(ty);
    if t == 1 {
        return Ok(WarpingPathPair { phi_x: vec![1], phi_y: vec![1] });
    }
    // integer ceiling; the floating form skips indices when the ratio rounds up
    let map = |len: usize| -> Vec<usize> {
        (0..t).map(|s| 1 + (s * (len - 1)).div_ceil(t - 1)).collect()
    };
    WarpingPathPair::new(map(tx), map(ty), tx, ty)
}

/// Materializes the aligned frame pairs: column `t` of the outputs is
/// `X[:, phi_x[t]]` and `Y[:, phi_y[t]]`.
pub fn gather_aligned(
    x: &FeatureSequence,
    y: &FeatureSequence,
    path: &WarpingPathPair,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (ex, ey) = path.end();
    if ex > x.len() || ey > y.len() || path.phi_x.iter().chain(&path.phi_y).any(|&i| i == 0) {
        return Err(invalid(format!(
            "path indices out of range for sequences of length ({}, {})",
            x.len(),
            y.len()
        )));
    }
    let ix: Vec<usize> = path.phi_x.iter().map(|i| i - 1).collect();
    let iy: Vec<usize> = path.phi_y.iter().map(|i| i - 1).collect();
    Ok((x.data.select_columns(&ix), y.data.select_columns(&iy)))
}
