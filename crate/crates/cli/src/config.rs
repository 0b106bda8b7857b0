//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use fpmdi_core::calibration::{ExtinctionConvention, HoeffdingTrials};
use fpmdi_core::finitekey::SecurityEpsilons;
use fpmdi_core::montecarlo::FlawSampling;
use fpmdi_core::{ChannelParams, FlawParams, ProtocolParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub loss_min_db: f64,
    pub loss_max_db: f64,
    pub loss_step_db: f64,
    /// Maximize the rate over `μ′` at every loss point.
    pub optimize_mu: bool,
    /// Correlation parameters for one curve each, with all other flaws off.
    pub epsilon_values: Option<Vec<f64>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            loss_min_db: 0.0,
            loss_max_db: 50.0,
            loss_step_db: 1.0,
            optimize_mu: true,
            epsilon_values: None,
        }
    }
}

impl SweepConfig {
    pub fn losses(&self) -> Vec<f64> {
        let n = ((self.loss_max_db - self.loss_min_db) / self.loss_step_db + 1e-9).floor() as usize;
        (0..=n).map(|k| self.loss_min_db + k as f64 * self.loss_step_db).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub sampling: FlawSampling,
    pub chunk_size: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sampling: FlawSampling::default(),
            chunk_size: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub eps_h: f64,
    pub hoeffding_trials: HoeffdingTrials,
    pub window_s: f64,
    pub extinction_db: Option<f64>,
    pub extinction_convention: ExtinctionConvention,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            eta1: 0.663,
            eta2: 0.736,
            eps_h: 1e-10,
            hoeffding_trials: HoeffdingTrials::PerCount,
            window_s: 100.0,
            extinction_db: None,
            extinction_convention: ExtinctionConvention::default(),
        }
    }
}

/// Input files; relative paths are resolved against the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub counts: Option<PathBuf>,
    pub phase_cal: Option<PathBuf>,
    pub pattern: Option<PathBuf>,
    pub power: Option<PathBuf>,
    /// Flaw parameters written by `calibrate all`; replaces `[flaw]`.
    pub flaws: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: ProtocolParams,
    pub channel: ChannelParams,
    pub flaw: FlawParams,
    pub epsilon: SecurityEpsilons,
    pub sweep: SweepConfig,
    pub simulate: SimulateConfig,
    pub calibration: CalibrationConfig,
    pub paths: PathsConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str, base_dir: PathBuf) -> CliResult<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir;
        if let Some(p) = cfg.paths.flaws.clone() {
            let p = cfg.resolve(&p);
            let text = std::fs::read_to_string(&p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            cfg.flaw = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.protocol.validate()?;
        self.channel.validate()?;
        self.flaw.validate()?;
        self.epsilon.validate()?;
        let s = &self.sweep;
        if !(s.loss_step_db > 0.0 && s.loss_min_db >= 0.0 && s.loss_max_db >= s.loss_min_db) {
            return Err(CliError::Config(format!("bad sweep range {s:?}")));
        }
        if let Some(list) = &s.epsilon_values {
            if list.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(CliError::Config("epsilon_values must lie in [0, 1]".into()));
            }
        }
        if self.simulate.chunk_size == 0 {
            return Err(CliError::Config("simulate.chunk_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Flaws in effect, honoring `--no-flaws`.
    pub fn flaws(&self, no_flaws: bool) -> FlawParams {
        if no_flaws {
            FlawParams::none()
        } else {
            self.flaw.clone()
        }
    }
}

/// SHA-256 of the JSON form of the effective parameters.
pub fn params_hash<T: Serialize>(params: &T) -> String {
    let bytes = serde_json::to_vec(params).expect("parameters serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[channel]\nloss = 3.0\n", PathBuf::new()).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(RunConfig::from_toml("[extra]\n", PathBuf::new()).is_err());
    }

    #[test]
    fn partial_sections_take_defaults() {
        let cfg = RunConfig::from_toml("[channel]\nloss_db = 7.0\n", PathBuf::new()).unwrap();
        assert_eq!(cfg.channel.loss_db, 7.0);
        assert_eq!(cfg.channel.f, 1.16);
        assert_eq!(cfg.protocol, ProtocolParams::default());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let err = RunConfig::from_toml("[protocol]\np_x = 0.7\n", PathBuf::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn sweep_grid() {
        let s = SweepConfig {
            loss_min_db: 0.0,
            loss_max_db: 1.0,
            loss_step_db: 0.25,
            ..SweepConfig::default()
        };
        assert_eq!(s.losses(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn hash_tracks_parameters() {
        let a = params_hash(&ChannelParams::default());
        assert_eq!(a.len(), 64);
        assert_eq!(a, params_hash(&ChannelParams::default()));
        assert_ne!(a, params_hash(&ChannelParams::default().at_loss(1.0)));
    }
}
