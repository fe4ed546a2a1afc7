//! Run configuration shared by every stage.
//!
//! A validated [`RunConfig`] is copied into each split artifact so a split can
//! be reproduced from the artifact alone. Paths and the worker thread count
//! are deliberately not part of it: neither affects any output byte.

use serde::{Deserialize, Serialize};

use crate::cliffgraph::SplitFractions;
use crate::fingerprint::{DEFAULT_RADIUS, DEFAULT_WIDTH};
use crate::pairgen::PairGenConfig;
use crate::severity::SeverityConfig;
use crate::trainer::{ControllerConfig, TrainingConfig};
use crate::Error;

pub const DEFAULT_DEGREE_CAP: usize = 32;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerprintConfig {
    pub radius: usize,
    pub width: usize,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        Self {
            radius: DEFAULT_RADIUS,
            width: DEFAULT_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub fingerprint: FingerprintConfig,
    pub pairs: PairGenConfig,
    pub degree_cap: usize,
    pub fractions: SplitFractions,
    pub severity: SeverityConfig,
    pub controller: ControllerConfig,
    pub training: TrainingConfig,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fingerprint: FingerprintConfig::default(),
            pairs: PairGenConfig::default(),
            degree_cap: DEFAULT_DEGREE_CAP,
            fractions: SplitFractions::default(),
            severity: SeverityConfig::default(),
            controller: ControllerConfig::default(),
            training: TrainingConfig::default(),
            seed: DEFAULT_SEED,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !self.fingerprint.width.is_power_of_two() {
            return Err(Error::Config(format!(
                "fingerprint width {} must be a power of two",
                self.fingerprint.width
            )));
        }
        if self.degree_cap == 0 {
            return Err(Error::Config("degree cap must be at least 1".into()));
        }
        self.pairs.validate()?;
        self.fractions.validate()?;
        self.severity.validate()?;
        self.controller.validate()?;
        self.training.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_fields() {
        let mut c = RunConfig::default();
        c.degree_cap = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.pairs.alpha = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.controller.s_min = 2.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.severity.m = c.severity.k + 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }
}
