//! Small feed-forward networks with hand-written backpropagation.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod mlp;
mod stack;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use mlp::{Dense, ForwardCache, Mlp, MlpGrads, DEFAULT_SLOPE};
pub use stack::{EncoderStack, StackConfig, StackGrads};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};

/// Anything whose trainable state can be viewed as a list of flat tensors.
pub trait Parameterized {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn tensor_sizes(&self) -> Vec<usize> {
        self.param_slices().iter().map(|s| s.len()).collect()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.tensor_sizes().iter().sum();
        if flat.len() != total {
            return Err(invalid(format!("expected {total} parameters, got {}", flat.len())));
        }
        let mut offset = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }
}

/// Adds independent `N(0, sigma²)` noise to every entry.
pub fn inject_noise<R: Rng + ?Sized>(x: &DMatrix<f64>, sigma: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("noise std must be a nonnegative number, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("valid std");
    Ok(x.map(|v| v + normal.sample(rng)))
}
