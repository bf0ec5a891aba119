use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer schedule and stopping rule shared by every regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Last epoch (1-based) trained at `initial_lr`.
    pub lr_drop_epoch: usize,
    pub dropped_lr: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

/// Epoch count the desk defaults are scaled against.
pub const REFERENCE_EPOCHS: usize = 200;

impl TrainConfig {
    /// Learning rates, patience and batch size as published; `max_epochs`
    /// left to the caller.
    pub fn paper(max_epochs: usize, seed: u64) -> Self {
        Self {
            initial_lr: 1e-3,
            lr_drop_epoch: 100,
            dropped_lr: 1e-4,
            patience: 50,
            batch_size: 200,
            max_epochs,
            seed,
        }
    }

    /// Paper schedule with the LR drop scaled to `max_epochs` (drop at the
    /// halfway point of 200) and batch 32 for datasets under 1000 samples.
    pub fn desk(max_epochs: usize, train_samples: usize, seed: u64) -> Self {
        let mut c = Self::paper(max_epochs, seed);
        if max_epochs < REFERENCE_EPOCHS {
            c.lr_drop_epoch = (100 * max_epochs / REFERENCE_EPOCHS).max(1);
        }
        if train_samples < 1000 {
            c.batch_size = 32;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad(format!("initial_lr must be positive, got {}", self.initial_lr));
        }
        if !(self.dropped_lr > 0.0 && self.dropped_lr <= self.initial_lr) {
            return bad(format!(
                "dropped_lr must lie in (0, initial_lr], got {}",
                self.dropped_lr
            ));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch_size must be at least 2 for batch normalization, got {}",
                self.batch_size
            ));
        }
        Ok(())
    }

    /// Learning rate for 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch <= self.lr_drop_epoch {
            self.initial_lr
        } else {
            self.dropped_lr
        }
    }

    /// Default fine-tuning length: 15% of the distillation epochs, rounded.
    pub fn fine_tune_budget(&self) -> usize {
        (self.max_epochs as f64 * 0.15).round() as usize
    }
}

/// Weight `alpha` on the ground-truth term and temperature of the soft
/// targets in the autoencoder distillation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdConfig {
    pub alpha: f64,
    pub temperature: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            temperature: 5.0,
        }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    /// Zero-epoch budget; the model is returned unchanged.
    NoBudget,
}

/// Stops once `patience` epochs pass without a strictly lower val loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_loss: f64,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_loss: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Records an epoch; returns (improved, should_stop).
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        let improved = val_loss < self.best_loss;
        if improved {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
        }
        (improved, epoch >= self.best_epoch + self.patience)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule() {
        let c = TrainConfig::paper(300, 0);
        assert_eq!(c.lr_at(1), 1e-3);
        assert_eq!(c.lr_at(100), 1e-3);
        assert_eq!(c.lr_at(101), 1e-4);
        let d = TrainConfig::desk(60, 4000, 0);
        assert_eq!((d.lr_drop_epoch, d.batch_size), (30, 200));
        assert_eq!(d.lr_at(31), 1e-4);
        assert_eq!(TrainConfig::desk(200, 500, 0).batch_size, 32);
        assert_eq!(TrainConfig::desk(200, 500, 0).lr_drop_epoch, 100);
        assert_eq!(TrainConfig::desk(100, 4000, 0).fine_tune_budget(), 15);
    }

    #[test]
    fn patience_on_constant_loss() {
        let mut es = EarlyStopping::new(50);
        let mut stopped_at = None;
        for epoch in 1..=500 {
            if es.observe(epoch, 0.25).1 {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(es.best_epoch, 1);
        assert_eq!(stopped_at, Some(51));
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::paper(10, 0);
        assert!(c.validate().is_ok());
        c.batch_size = 1;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            dropped_lr: 1e-2,
            ..TrainConfig::paper(10, 0)
        };
        assert!(c.validate().is_err());
        assert!(KdConfig::default().validate().is_ok());
        assert!(KdConfig { alpha: 1.5, temperature: 5.0 }.validate().is_err());
        assert!(matches!(
            KdConfig { alpha: 0.3, temperature: 0.0 }.validate(),
            Err(Error::InvalidTemperature(_))
        ));
        let json = r#"{"initial_lr":1e-3,"lr_drop_epoch":100,"dropped_lr":1e-4,"patience":50,"batch_size":200,"max_epochs":5,"seed":1,"extra":2}"#;
        assert!(serde_json::from_str::<TrainConfig>(json).is_err());
    }
}
