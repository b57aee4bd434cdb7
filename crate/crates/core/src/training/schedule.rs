use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamRegistry;

/// Optimization settings. Defaults: SGD at 0.001 dropping tenfold to
/// 0.0001 at epoch 50 of 100, batches of 32.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub lr_final: f64,
    pub decay_epoch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_initial: 0.001,
            lr_final: 0.0001,
            decay_epoch: 50,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return Err(Error::config("lr_initial", "must be positive"));
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return Err(Error::config("lr_final", "must be positive and not above lr_initial"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be positive"));
        }
        if self.decay_epoch >= self.epochs {
            return Err(Error::config("decay_epoch", "must be below epochs"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        Ok(())
    }
}

/// Step schedule: `lr_initial` before `decay_epoch`, `lr_final` from then on.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::contract(format!("epoch {epoch} outside 0..{}", config.epochs)));
    }
    Ok(if epoch < config.decay_epoch {
        config.lr_initial
    } else {
        config.lr_final
    })
}

/// Plain SGD: `θ ← θ − lr · ∇θ` for every registered parameter.
pub fn sgd_step(params: &mut ParamRegistry, grads: &ParamRegistry, lr: f64) -> Result<()> {
    params.add_scaled(grads, -lr)
}
