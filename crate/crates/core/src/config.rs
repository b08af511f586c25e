//! Pipeline configuration shared by the CLI and the experiment runner.
//! Every run echoes its effective configuration into the artifacts it
//! produces so results can be reproduced.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("unparseable config: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// DEFLATE level used for content distances, 0..=9.
    pub compressor_level: u32,
    /// Dendrogram cut threshold.
    pub tau: f64,
    /// Minimum signature token length in bytes.
    pub min_token_len: usize,
    /// Seed for sampling and corpus generation.
    pub seed: u64,
    /// Allowed |ncd(x,y) - ncd(y,x)| before the distance is considered
    /// unstable; consumed by verification tooling.
    pub ncd_asymmetry_tolerance: f64,
    /// Worker cap for parallel stages; 0 picks the machine default.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            compressor_level: crate::distance::DEFAULT_COMPRESSOR_LEVEL,
            tau: 1.0,
            min_token_len: 5,
            seed: 42,
            ncd_asymmetry_tolerance: 0.05,
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.compressor_level > 9 {
            return Err(ConfigError::Invalid(format!(
                "compressor_level {} not in 0..=9",
                self.compressor_level
            )));
        }
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "tau {} must be finite and non-negative",
                self.tau
            )));
        }
        if self.min_token_len == 0 {
            return Err(ConfigError::Invalid("min_token_len must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ncd_asymmetry_tolerance) {
            return Err(ConfigError::Invalid(format!(
                "ncd_asymmetry_tolerance {} not in 0..=1",
                self.ncd_asymmetry_tolerance
            )));
        }
        Ok(())
    }

    /// Parses a TOML config file; absent keys take their defaults.
    pub fn from_toml(s: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = PipelineConfig::from_toml("tau = 0.8\nseed = 7\n").unwrap();
        assert_eq!(cfg.tau, 0.8);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.min_token_len, 5);
        assert_eq!(cfg.compressor_level, 9);
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(PipelineConfig::from_toml("compressor_level = 12").is_err());
        assert!(PipelineConfig::from_toml("tau = -1.0").is_err());
        assert!(PipelineConfig::from_toml("min_token_len = 0").is_err());
        assert!(PipelineConfig::from_toml("no_such_key = 1").is_err());
    }
}
