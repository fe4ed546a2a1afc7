//! Validation-driven cliff weight.
//!
//! After each validation pass the normalized Q4–Q1 MAE gap is smoothed with an
//! EMA and mapped through a clipped exponential, so a persistent positive gap
//! raises the weight and a negative gap lowers it.

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub lambda_base: f64,
    pub gamma: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub ema_alpha: f64,
    pub epsilon: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda_base: 0.1,
            gamma: 4.0,
            s_min: 0.25,
            s_max: 4.0,
            ema_alpha: 0.7,
            epsilon: 1e-8,
        }
    }
}

impl ControllerConfig {
    /// `lambda_base = 0` is accepted: it turns the cliff term off.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lambda_base >= 0.0 && self.lambda_base.is_finite()) {
            return bad(format!("lambda_base {} must be >= 0", self.lambda_base));
        }
        if !(self.s_min > 0.0 && self.s_min <= 1.0 && 1.0 <= self.s_max && self.s_max.is_finite()) {
            return bad(format!(
                "need 0 < s_min <= 1 <= s_max, got s_min={} s_max={}",
                self.s_min, self.s_max
            ));
        }
        if !(0.0..1.0).contains(&self.ema_alpha) {
            return bad(format!("ema_alpha {} outside [0,1)", self.ema_alpha));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be > 0", self.epsilon));
        }
        if !self.gamma.is_finite() {
            return bad(format!("gamma {} must be finite", self.gamma));
        }
        Ok(())
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_base * self.s_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_base * self.s_max
    }
}

/// `(q4 - q1) / (½(|q4| + |q1|) + ε)`; positive when the high-severity
/// group is still worse.
pub fn gap_signal(mae_q4: f64, mae_q1: f64, epsilon: f64) -> f64 {
    (mae_q4 - mae_q1) / (0.5 * (mae_q4.abs() + mae_q1.abs()) + epsilon)
}

pub fn ema_update(g_bar_prev: f64, g_t: f64, ema_alpha: f64) -> f64 {
    ema_alpha * g_bar_prev + (1.0 - ema_alpha) * g_t
}

pub fn lambda_update(g_bar: f64, config: &ControllerConfig) -> f64 {
    config.lambda_base * (config.gamma * g_bar).exp().clamp(config.s_min, config.s_max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub lambda: f64,
    pub g_bar: f64,
    pub epoch: usize,
}

impl ControllerState {
    pub fn new(config: &ControllerConfig) -> Self {
        Self {
            lambda: config.lambda_base,
            g_bar: 0.0,
            epoch: 0,
        }
    }

    /// Folds one validation pass into the state and returns `g_t`.
    pub fn observe(&mut self, mae_q4: f64, mae_q1: f64, config: &ControllerConfig) -> f64 {
        let g = gap_signal(mae_q4, mae_q1, config.epsilon);
        self.g_bar = ema_update(self.g_bar, g, config.ema_alpha);
        self.lambda = lambda_update(self.g_bar, config);
        self.epoch += 1;
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gap_examples() {
        assert_eq!(gap_signal(1.3, 1.3, 1e-8), 0.0);
        assert!((gap_signal(2.0, 1.0, 0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((gap_signal(1.0, 2.0, 0.0) + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(gap_signal(0.0, 0.0, 1e-8), 0.0);
    }

    #[test]
    fn ema_examples() {
        assert_eq!(ema_update(0.4, 0.4, 0.7), 0.4);
        assert!((ema_update(0.0, 1.0, 0.7) - 0.3).abs() < 1e-15);
        // closed form for a constant stream from 0: g (1 - a^t)
        let mut g_bar = 0.0;
        for t in 1..=30 {
            g_bar = ema_update(g_bar, 0.5, 0.7);
            let closed = 0.5 * (1.0 - 0.7f64.powi(t));
            assert!((g_bar - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_examples() {
        let c = ControllerConfig::default();
        assert_eq!(lambda_update(0.0, &c), 0.1);
        assert!((lambda_update(1.0, &c) - 0.4).abs() < 1e-12);
        assert!((lambda_update(-1.0, &c) - 0.025).abs() < 1e-12);
    }

    #[test]
    fn persistent_gap_climbs_to_clip() {
        let c = ControllerConfig::default();
        let mut state = ControllerState::new(&c);
        let mut prev = state.lambda;
        for _ in 0..40 {
            state.observe(2.0, 1.0, &c);
            assert!(state.lambda >= prev);
            prev = state.lambda;
        }
        assert!((state.lambda - c.lambda_max()).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(ControllerConfig::default().validate().is_ok());
        let zero = ControllerConfig {
            lambda_base: 0.0,
            ..Default::default()
        };
        assert!(zero.validate().is_ok());
        let bad = ControllerConfig {
            ema_alpha: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn lambda_is_clipped_and_monotone(a in -50.0f64..50.0, b in -50.0f64..50.0) {
            let c = ControllerConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let la = lambda_update(lo, &c);
            let lb = lambda_update(hi, &c);
            prop_assert!(la <= lb);
            for l in [la, lb] {
                prop_assert!((0.025 - 1e-15..=0.4 + 1e-15).contains(&l));
            }
        }
    }
}
