//! Prediction-gated reward.
//!
//! A step is penalized when the QoS (predicted or measured) reaches the
//! target; the penalty is the log10 overshoot clipped at `beta`. Otherwise
//! the reward is a convex mix of BE performance and power saving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weight of BE performance in the positive branch.
    pub alpha: f64,
    /// Clip on the negative branch magnitude.
    pub beta: f64,
    /// Gate the positive branch on max(pred, meas) rather than pred alone.
    pub gate_on_max: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 3.0,
            gate_on_max: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("reward alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("reward beta {} must be positive", self.beta)));
        }
        Ok(())
    }
}

fn check_target(target: f64) -> Result<()> {
    if target > 0.0 && target.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("QoS target {target} must be positive")))
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} {v} outside [0, 1]")))
    }
}

/// `-min(log10(max(pred, meas) / target), beta)`.
pub fn reward_negative(pred: f64, meas: f64, target: f64, cfg: &RewardConfig) -> Result<f64> {
    check_target(target)?;
    let worst = pred.max(meas);
    if !(worst >= target) {
        return Err(Error::InvalidInput(format!(
            "negative reward needs max(pred, meas) >= target, got {worst} < {target}"
        )));
    }
    Ok(-(worst / target).log10().min(cfg.beta))
}

pub fn reward_positive(be_perf_norm: f64, power_saving_norm: f64, alpha: f64) -> Result<f64> {
    check_unit("be_perf_norm", be_perf_norm)?;
    check_unit("power_saving_norm", power_saving_norm)?;
    check_unit("alpha", alpha)?;
    Ok(alpha * be_perf_norm + (1.0 - alpha) * power_saving_norm)
}

/// True when the step falls in the penalized branch.
pub fn is_penalized(pred: f64, meas: f64, target: f64, cfg: &RewardConfig) -> bool {
    if cfg.gate_on_max {
        pred.max(meas) >= target
    } else {
        pred >= target
    }
}

pub fn compute_reward(
    pred: f64,
    meas: f64,
    target: f64,
    be_perf_norm: f64,
    power_norm: f64,
    cfg: &RewardConfig,
) -> Result<f64> {
    check_target(target)?;
    if !(pred.is_finite() && meas.is_finite()) || pred < 0.0 || meas < 0.0 {
        return Err(Error::InvalidInput(format!(
            "QoS values must be finite and non-negative, got pred {pred}, meas {meas}"
        )));
    }
    if is_penalized(pred, meas, target, cfg) {
        reward_negative(pred, meas, target, cfg)
    } else {
        check_unit("power_norm", power_norm)?;
        reward_positive(be_perf_norm, 1.0 - power_norm, cfg.alpha)
    }
}

/// Node-level reward for several HP workloads: the worst penalty if any HP
/// is penalized, else the shared positive term.
pub fn compute_multi_reward(
    pred: &[f64],
    meas: &[f64],
    targets: &[f64],
    be_perf_norm: f64,
    power_norm: f64,
    cfg: &RewardConfig,
) -> Result<f64> {
    if pred.is_empty() || pred.len() != meas.len() || pred.len() != targets.len() {
        return Err(Error::Shape {
            expected: targets.len(),
            actual: pred.len().min(meas.len()),
        });
    }
    let mut worst: Option<f64> = None;
    let mut positive = 0.0;
    for i in 0..pred.len() {
        let r = compute_reward(pred[i], meas[i], targets[i], be_perf_norm, power_norm, cfg)?;
        if is_penalized(pred[i], meas[i], targets[i], cfg) {
            worst = Some(worst.map_or(r, |w: f64| w.min(r)));
        } else {
            positive = r;
        }
    }
    Ok(worst.unwrap_or(positive))
}

/// Reward for a controller without a predictor: the prediction is zero.
pub fn twig_reward(meas: f64, target: f64, be_perf_norm: f64, power_norm: f64, cfg: &RewardConfig) -> Result<f64> {
    let cfg = RewardConfig {
        gate_on_max: true,
        ..cfg.clone()
    };
    compute_reward(0.0, meas, target, be_perf_norm, power_norm, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn negative_branch_values() {
        let t = 250.0;
        assert_eq!(reward_negative(t, 0.0, t, &cfg()).unwrap(), 0.0);
        assert!((reward_negative(10.0 * t, 0.0, t, &cfg()).unwrap() + 1.0).abs() < 1e-12);
        assert!((reward_negative(0.0, 1e6 * t, t, &cfg()).unwrap() + 3.0).abs() < 1e-12);
        assert!(reward_negative(0.5 * t, 0.0, t, &cfg()).is_err());
        assert!(reward_negative(t, t, 0.0, &cfg()).is_err());
    }

    #[test]
    fn positive_branch_values() {
        assert_eq!(reward_positive(1.0, 1.0, 0.8).unwrap(), 1.0);
        assert_eq!(reward_positive(0.0, 0.0, 0.8).unwrap(), 0.0);
        assert!((reward_positive(0.5, 0.25, 0.8).unwrap() - 0.45).abs() < 1e-12);
        assert!(reward_positive(1.1, 0.0, 0.8).is_err());
        assert!(reward_positive(0.5, -0.1, 0.8).is_err());
    }

    #[test]
    fn gating() {
        let t = 100.0;
        let pos = compute_reward(0.5 * t, 0.2 * t, t, 0.5, 0.75, &cfg()).unwrap();
        assert!((pos - 0.45).abs() < 1e-12);
        // a measured violation dominates
        let r = compute_reward(0.5 * t, 2.0 * t, t, 0.5, 0.75, &cfg()).unwrap();
        assert!((r + 2f64.log10()).abs() < 1e-12);
        // the prediction gates even with no measured drop
        let r = compute_reward(2.0 * t, 0.0, t, 0.5, 0.75, &cfg()).unwrap();
        assert!((r + 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn prediction_only_gate() {
        let c = RewardConfig {
            gate_on_max: false,
            ..cfg()
        };
        let t = 100.0;
        let r = compute_reward(0.5 * t, 2.0 * t, t, 0.5, 0.75, &c).unwrap();
        assert!((r - 0.45).abs() < 1e-12);
        let r = compute_reward(2.0 * t, 0.0, t, 0.5, 0.75, &c).unwrap();
        assert!(r < 0.0);
    }

    #[test]
    fn twig_reward_ignores_prediction() {
        let t = 250.0;
        assert_eq!(twig_reward(t, t, 0.3, 0.3, &cfg()).unwrap(), 0.0);
        assert!((twig_reward(10.0 * t, t, 0.3, 0.3, &cfg()).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(twig_reward(0.0, t, 1.0, 0.0, &cfg()).unwrap(), 1.0);
    }

    #[test]
    fn multi_hp_takes_the_worst_penalty() {
        let r = compute_multi_reward(&[10.0, 1000.0], &[0.0, 0.0], &[100.0, 10.0], 0.5, 0.5, &cfg()).unwrap();
        assert!((r + 2.0).abs() < 1e-12);
        let r = compute_multi_reward(&[10.0, 1.0], &[0.0, 0.0], &[100.0, 10.0], 1.0, 0.0, &cfg()).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(compute_multi_reward(&[1.0], &[], &[1.0], 0.5, 0.5, &cfg()).is_err());
    }

    proptest! {
        #[test]
        fn reward_range_and_gate(
            pred in 0.0f64..1e9,
            meas in 0.0f64..1e9,
            target in 1.0f64..1e4,
            be in 0.0f64..=1.0,
            power in 0.0f64..=1.0,
            alpha in 0.0f64..=1.0,
        ) {
            let c = RewardConfig { alpha, ..cfg() };
            let r = compute_reward(pred, meas, target, be, power, &c).unwrap();
            prop_assert!((-c.beta..=1.0).contains(&r));
            if pred.max(meas) > target {
                prop_assert!(r < 0.0);
            } else if pred.max(meas) < target {
                prop_assert!(r >= 0.0);
            }
        }
    }
}
