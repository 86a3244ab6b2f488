use crate::train::config::TrainConfig;

/// Adversarial weight after `step` completed optimizer steps.
pub fn lambda_at(step: u64, cfg: &TrainConfig) -> f64 {
    (cfg.lambda_step * step as f64).min(cfg.lambda_max)
}

/// Linear warmup to `initial_lr` at `warmup_steps`, then inverse square-root decay.
/// `step` counts from 1.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f64 {
    let s = step.max(1) as f64;
    let w = cfg.warmup_steps.max(1) as f64;
    cfg.initial_lr * (s / w).min((w / s).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_ramp_and_cap() {
        let c = TrainConfig::default();
        assert_eq!(lambda_at(0, &c), 0.0);
        assert!((lambda_at(10, &c) - 0.1).abs() < 1e-15);
        assert_eq!(lambda_at(500, &c), 1.0);
    }

    #[test]
    fn lr_shape() {
        let c = TrainConfig::default();
        assert!((lr_at(20_000, &c) - 1e-5).abs() < 1e-20);
        assert!((lr_at(10_000, &c) - 5e-6).abs() < 1e-20);
        assert!((lr_at(80_000, &c) - 5e-6).abs() < 1e-20);
    }
}
