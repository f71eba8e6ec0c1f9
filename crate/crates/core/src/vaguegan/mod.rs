//! Suppressed-loss conditional GAN used to manufacture vague poisoned data,
//! its unsupervised (information-maximizing) variant, and the closed forms
//! behind the suppression factor.

mod loss;
mod theory;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;

pub use loss::{vague_loss_terms, LOG_CLAMP};
pub use theory::{equilibrium_ratio, mi_lower_bound, optimal_discriminator};
pub use train::{
    augment_poisongan, generate_poisoned, generate_poisoned_seeded, train_unsupervised, train_unsupervised_checkpoints,
    train_vaguegan, train_vaguegan_checkpoints,
};

/// Latent code layout of the unsupervised variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodeSpec {
    /// Categorical code size; `None` means the dataset's class count.
    pub categorical: Option<usize>,
    /// Continuous style codes drawn from `U(-1, 1)`.
    pub continuous: usize,
}

impl Default for CodeSpec {
    fn default() -> Self {
        Self {
            categorical: None,
            continuous: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub kappa: f64,
    pub epochs: usize,
    pub noise_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Adam step size shared by G, D and Q.
    pub lr: f64,
    pub beta1: f64,
    /// Weight of the mutual-information term (unsupervised only).
    pub lambda: f64,
    /// Present iff the unsupervised variant is wanted.
    pub code: Option<CodeSpec>,
    /// Set by the caller from the run's seed tree, never read from config.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            kappa: 0.2,
            epochs: 600,
            noise_dim: 64,
            gen_hidden: vec![128, 256, 256, 512],
            disc_hidden: vec![512, 256, 256, 128],
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
            lr: 2e-4,
            beta1: 0.5,
            lambda: 1.0,
            code: None,
            seed: 0,
        }
    }
}

impl GanConfig {
    /// Check ranges; `kappa = 0` is only legal for the augmentation baseline.
    pub fn validate(&self, allow_zero_kappa: bool) -> Result<()> {
        let lo_ok = if allow_zero_kappa {
            self.kappa >= 0.0
        } else {
            self.kappa > 0.0
        };
        if !(lo_ok && self.kappa < 1.0) {
            return Err(Error::config("kappa", format!("{} outside (0, 1)", self.kappa)));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.noise_dim == 0 {
            return Err(Error::config("noise_dim", "must be at least 1"));
        }
        if self.gen_hidden.is_empty() || self.gen_hidden.contains(&0) {
            return Err(Error::config("gen_hidden", "needs positive widths"));
        }
        if self.disc_hidden.is_empty() || self.disc_hidden.contains(&0) {
            return Err(Error::config("disc_hidden", "needs positive widths"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config("leaky_slope", "must lie in (0, 1)"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("beta1", "must lie in [0, 1)"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::config("lambda", "must be nonnegative"));
        }
        if let Some(code) = &self.code {
            if code.categorical == Some(0) {
                return Err(Error::config("code.categorical", "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Trained generator/discriminator pair, plus the code classifier when unsupervised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModel {
    pub generator: Network,
    pub discriminator: Network,
    pub q_head: Option<Network>,
    pub config: GanConfig,
    pub num_classes: usize,
    pub feature_dim: usize,
}

impl GanModel {
    pub fn is_unsupervised(&self) -> bool {
        self.q_head.is_some()
    }
}
