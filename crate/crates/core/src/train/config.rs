use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kv;
use crate::train::adam::AdamConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub initial_lr: f64,
    pub warmup_steps: u64,
    pub epochs: u64,
    pub batch_size: usize,
    pub lambda_step: f64,
    pub lambda_max: f64,
    pub seed: u64,
    /// Guard in the per-batch style error normalization.
    pub epsilon_norm: f64,
    pub adam_eps: f64,
    /// When false the discriminator is never updated.
    pub train_discriminator: bool,
    /// Stop after this many optimizer steps in total; 0 means no limit.
    pub max_steps: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta1: 0.95,
            beta2: 0.999,
            initial_lr: 1e-5,
            warmup_steps: 20_000,
            epochs: 200,
            batch_size: 24,
            lambda_step: 0.01,
            lambda_max: 1.0,
            seed: 0,
            epsilon_norm: 1e-8,
            adam_eps: 1e-8,
            train_discriminator: true,
            max_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}={v} must lie in (0, 1)")))
            }
        };
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if self.warmup_steps == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("warmup_steps, epochs and batch_size must be positive".into()));
        }
        let nonneg = [
            ("initial_lr", self.initial_lr),
            ("lambda_step", self.lambda_step),
            ("lambda_max", self.lambda_max),
            ("epsilon_norm", self.epsilon_norm),
            ("adam_eps", self.adam_eps),
        ];
        for (k, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{k}={v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("beta1".into(), self.beta1.to_string()),
            ("beta2".into(), self.beta2.to_string()),
            ("initial_lr".into(), self.initial_lr.to_string()),
            ("warmup_steps".into(), self.warmup_steps.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("lambda_step".into(), self.lambda_step.to_string()),
            ("lambda_max".into(), self.lambda_max.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("epsilon_norm".into(), self.epsilon_norm.to_string()),
            ("adam_eps".into(), self.adam_eps.to_string()),
            ("train_discriminator".into(), self.train_discriminator.to_string()),
            ("max_steps".into(), self.max_steps.to_string()),
        ]
    }

    pub fn apply_kv(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        kv::take(map, "beta1", &mut self.beta1)?;
        kv::take(map, "beta2", &mut self.beta2)?;
        kv::take(map, "initial_lr", &mut self.initial_lr)?;
        kv::take(map, "warmup_steps", &mut self.warmup_steps)?;
        kv::take(map, "epochs", &mut self.epochs)?;
        kv::take(map, "batch_size", &mut self.batch_size)?;
        kv::take(map, "lambda_step", &mut self.lambda_step)?;
        kv::take(map, "lambda_max", &mut self.lambda_max)?;
        kv::take(map, "seed", &mut self.seed)?;
        kv::take(map, "epsilon_norm", &mut self.epsilon_norm)?;
        kv::take(map, "adam_eps", &mut self.adam_eps)?;
        kv::take(map, "train_discriminator", &mut self.train_discriminator)?;
        kv::take(map, "max_steps", &mut self.max_steps)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_values() {
        let c = TrainConfig::default();
        assert_eq!((c.beta1, c.beta2, c.initial_lr), (0.95, 0.999, 1e-5));
        assert_eq!((c.warmup_steps, c.epochs, c.batch_size), (20_000, 200, 24));
        assert_eq!(c.lambda_step, 0.01);
        c.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let c = TrainConfig { seed: 9, lambda_max: 0.5, train_discriminator: false, ..TrainConfig::default() };
        let map = c.to_kv().into_iter().collect();
        let mut back = TrainConfig::default();
        back.apply_kv(&map).unwrap();
        assert_eq!(back, c);
        assert!(TrainConfig { beta1: 1.0, ..c }.validate().is_err());
    }
}
