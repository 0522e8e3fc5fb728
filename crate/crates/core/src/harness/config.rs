//! TOML configuration.
//!
//! Flat scenario keys at the top level, optional `[formation]` and
//! `[dynamics]` tables:
//!
//! ```toml
//! n_sus = 10
//! n_channels = 14
//! k_i = 3
//! alpha = 0.05
//! p_max_mw = 10.0
//! noise_mw = 1e-9
//! mu = 3.0
//! area_m = 3000.0
//! seed = 7
//! # theta_list = [0.98, 0.22, ...]   # one entry per channel
//!
//! [dynamics]
//! eta_seconds = 30.0
//! speed_kmh = 36.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsParams;
use crate::error::{Error, Result};
use crate::formation::FormationConfig;
use crate::scenario::{generate_scenario_with_thetas, PhysParams, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_sus: usize,
    pub n_channels: usize,
    pub k_i: usize,
    pub alpha: f64,
    pub p_max_mw: f64,
    pub noise_mw: f64,
    pub mu: f64,
    pub area_m: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_list: Option<Vec<f64>>,
    pub formation: FormationConfig,
    pub dynamics: DynamicsParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        let phys = PhysParams::default();
        Self {
            n_sus: 10,
            n_channels: 14,
            k_i: 3,
            alpha: phys.alpha,
            p_max_mw: phys.p_max,
            noise_mw: phys.noise,
            mu: phys.mu,
            area_m: phys.area_side,
            seed: 0,
            theta_list: None,
            formation: FormationConfig::default(),
            dynamics: DynamicsParams::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn phys(&self) -> PhysParams {
        PhysParams {
            p_max: self.p_max_mw,
            noise: self.noise_mw,
            mu: self.mu,
            alpha: self.alpha,
            area_side: self.area_m,
            ..PhysParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sus == 0 {
            return Err(Error::config("n_sus", "must be >= 1"));
        }
        if self.n_channels == 0 {
            return Err(Error::config("n_channels", "must be >= 1"));
        }
        if self.k_i == 0 || self.k_i > self.n_channels {
            return Err(Error::config(
                "k_i",
                format!("must lie in 1..={}, got {}", self.n_channels, self.k_i),
            ));
        }
        if let Some(list) = &self.theta_list {
            if list.len() != self.n_channels {
                return Err(Error::config(
                    "theta_list",
                    format!("expected {} entries, got {}", self.n_channels, list.len()),
                ));
            }
            if list.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::config("theta_list", "entries must lie in [0, 1]"));
            }
        }
        self.phys().validate()?;
        self.dynamics.validate()
    }

    /// The scenario described by this config, drawn with `seed`.
    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        generate_scenario_with_thetas(
            self.n_sus,
            self.n_channels,
            self.k_i,
            self.phys(),
            seed,
            self.theta_list.as_deref(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_keys() {
        let cfg = SimConfig::from_toml_str(
            "n_sus = 4\nn_channels = 6\nk_i = 2\nalpha = 0.1\np_max_mw = 5.0\nnoise_mw = 1e-9\n\
             mu = 3.0\narea_m = 1000.0\nseed = 3\ntheta_list = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]\n\
             [dynamics]\nspeed_kmh = 18.0\n",
        )
        .unwrap();
        assert_eq!(cfg.n_sus, 4);
        assert_eq!(cfg.dynamics.speed_kmh, 18.0);
        assert_eq!(cfg.dynamics.eta_seconds, 30.0);
        let s = cfg.scenario(cfg.seed).unwrap();
        assert_eq!(s.thetas(), vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(s.sus[0].known_channels.len(), 2);
    }

    #[test]
    fn errors_name_the_key() {
        let err = SimConfig::from_toml_str("n_channels = 3\nk_i = 5").unwrap_err();
        assert!(err.to_string().contains("k_i"), "{err}");
        let err = SimConfig::from_toml_str("alpha = 1.5").unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        let err = SimConfig::from_toml_str("n_channels = 2\nk_i = 1\ntheta_list = [0.5]").unwrap_err();
        assert!(err.to_string().contains("theta_list"), "{err}");
        let err = SimConfig::from_toml_str("n_suss = 3").unwrap_err();
        assert!(err.to_string().contains("n_suss"), "{err}");
    }
}
