//! Alignment of multi-view time series with different dimensionalities.
//!
//! Two sequences are projected into a shared latent space by learned
//! encoders (or linear CCA for the CTW baseline), and the projections are
//! aligned with dynamic time warping. Encoder training and re-alignment
//! alternate until the warping paths stop changing.
//!
//! Module map:
//! - [`seqcore`]: sequences, warping paths, feature pipeline
//! - [`matkernel`]: covariance, symmetric eigensolver, inverse square roots
//! - [`net`]: feed-forward networks, backprop, Adam, gradient checking
//! - [`losses`]: dependence, reconstruction and KL objectives
//! - [`align`]: DTW and the alternating training loops
//! - [`synth`]: synthetic two-view benchmark with known warps
//! - [`eval`]: alignment metrics, downstream regression, variant comparison
//! - [`cli`]: command-line entry point

pub mod align;
pub mod cli;
pub mod error;
pub mod eval;
pub mod losses;
pub mod matkernel;
pub mod net;
pub mod rng;
pub mod seqcore;
pub mod synth;

pub use error::{Error, Result};
