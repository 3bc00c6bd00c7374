//! Dependence losses between latent views, the auxiliary reconstruction and
//! KL terms, and the composed training objective.
//!
//! Every loss returns its value together with exact gradients. CCA and MMI are
//! maximized; the objective negates them.

mod cca;
mod contrastive;
mod mmi;
mod objective;
mod recon;
pub mod suite;

pub use cca::{cca_loss, CcaOutput};
pub use contrastive::{contrastive_loss, cosine_distance_grad, sample_negatives, ContrastiveOutput, NORM_GUARD};
pub use mmi::{kde_density_at, kde_log_density_loo, mmi_loss, KdeBandwidths, MmiMode, MmiOutput};
pub use objective::{objective_with, prepare_batch, total_objective, ObjectiveOutput, ObjectiveTerms, PreparedBatch};
pub use recon::{kl_loss, reconstruction_loss, ReconstructionOutput};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dependence {
    Cca,
    Mmi,
    Contrastive,
}

impl Dependence {
    pub const ALL: [Dependence; 3] = [Dependence::Cca, Dependence::Mmi, Dependence::Contrastive];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cca => "cca",
            Self::Mmi => "mmi",
            Self::Contrastive => "contrastive",
        }
    }
}

impl fmt::Display for Dependence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dependence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| crate::error::invalid(format!("unknown loss `{s}` (cca | mmi | contrastive)")))
    }
}

impl fmt::Display for MmiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MmiMode::Literal => "literal",
            MmiMode::SampleMean => "sample_mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub dependence: Dependence,
    pub margin: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub cca_regularizer: f64,
    pub mmi_mode: MmiMode,
    pub use_autoencoder: bool,
    pub use_private: bool,
    /// Initial value of all three KDE bandwidths.
    pub bandwidth_init: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            dependence: Dependence::Contrastive,
            margin: 0.5,
            lambda: 1.0,
            kappa: 1.0,
            cca_regularizer: 1e-4,
            mmi_mode: MmiMode::SampleMean,
            use_autoencoder: false,
            use_private: false,
            bandwidth_init: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| Err(Error::Config { key: key.into(), message: message.into() });
        if !(self.margin >= 0.0) {
            return bad("margin", "must be >= 0");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda", "must be >= 0");
        }
        if !(self.kappa >= 0.0) {
            return bad("kappa", "must be >= 0");
        }
        if !(self.cca_regularizer > 0.0) {
            return bad("cca_regularizer", "must be > 0");
        }
        if !(self.bandwidth_init > 0.0) || !self.bandwidth_init.is_finite() {
            return bad("bandwidth_init", "must be > 0");
        }
        Ok(())
    }

    pub fn initial_bandwidths(&self) -> KdeBandwidths {
        let s = self.bandwidth_init.ln();
        KdeBandwidths { log_sigma: [s; 3] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_valid_and_named() {
        let c = LossConfig::default();
        c.validate().unwrap();
        assert_eq!(c.margin, 0.5);
        assert_eq!(c.lambda, 1.0);
        for d in Dependence::ALL {
            assert_eq!(d.name().parse::<Dependence>().unwrap(), d);
        }
        assert!("dcca".parse::<Dependence>().is_err());
    }

    #[test]
    fn invalid_fields_named() {
        let c = LossConfig { cca_regularizer: 0.0, ..Default::default() };
        match c.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "cca_regularizer"),
            other => panic!("{other:?}"),
        }
    }
}
