//! JSON experiment configuration for the CLI runner.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibratorKind;
use crate::error::{Error, Result};
use crate::mlp::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Univariate4,
    Grid25,
    CalibrationStudy,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "univariate4" => Ok(ExperimentKind::Univariate4),
            "grid25" => Ok(ExperimentKind::Grid25),
            "calibration_study" => Ok(ExperimentKind::CalibrationStudy),
            other => Err(Error::Config {
                field: "experiment".into(),
                message: format!("unknown experiment `{other}`"),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    None,
    Mh,
    Drs,
}

impl std::str::FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Selector::None),
            "mh" => Ok(Selector::Mh),
            "drs" => Ok(Selector::Drs),
            other => Err(Error::Config {
                field: "selector".into(),
                message: format!("unknown selector `{other}` (expected none|mh|drs)"),
            }),
        }
    }
}

/// Discriminator choice: exact density-ratio oracle, a deliberately
/// miscalibrated warp of it, or a trained classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscriminatorSpec {
    Oracle,
    Warped { a: f64, b: f64 },
    Mlp {
        #[serde(default)]
        train: TrainConfig,
        #[serde(default = "default_train_size")]
        train_size: usize,
    },
}

impl std::str::FromStr for DiscriminatorSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "oracle" {
            return Ok(DiscriminatorSpec::Oracle);
        }
        if s == "mlp" {
            return Ok(DiscriminatorSpec::Mlp {
                train: TrainConfig::default(),
                train_size: default_train_size(),
            });
        }
        if let Some(args) = s.strip_prefix("warped(").and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            if parts.len() == 2 {
                let a = parts[0].parse().map_err(|_| bad_warp(s))?;
                let b = parts[1].parse().map_err(|_| bad_warp(s))?;
                return Ok(DiscriminatorSpec::Warped { a, b });
            }
        }
        Err(bad_warp(s))
    }
}

fn bad_warp(s: &str) -> Error {
    Error::Config {
        field: "discriminator".into(),
        message: format!("unknown discriminator `{s}` (expected oracle | warped(a,b) | mlp)"),
    }
}

fn default_train_size() -> usize {
    4000
}
fn default_k() -> usize {
    640
}
fn default_n_samples() -> usize {
    10_000
}
fn default_n_pilot() -> usize {
    10_000
}
fn default_max_draws() -> usize {
    1_000_000
}
fn default_calibration_size() -> usize {
    2000
}
fn default_real_pool() -> usize {
    10_000
}
fn default_true() -> bool {
    true
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_discriminator() -> DiscriminatorSpec {
    DiscriminatorSpec::Oracle
}
fn default_calibrator() -> CalibratorKind {
    CalibratorKind::Identity
}
fn default_selector() -> Selector {
    Selector::Mh
}

/// Full experiment description. The seed is mandatory so no run ever
/// depends on wall-clock state.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_selector")]
    pub selector: Selector,
    #[serde(default = "default_discriminator")]
    pub discriminator: DiscriminatorSpec,
    #[serde(default = "default_calibrator")]
    pub calibrator: CalibratorKind,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,

    /// univariate4: which component the generator is missing.
    #[serde(default)]
    pub missing_mode: Option<usize>,
    /// grid25: mode indices dropped from the generator.
    #[serde(default)]
    pub drop_modes: Vec<usize>,
    /// grid25: fraction of generator mass spread along grid edges.
    #[serde(default)]
    pub bridge_weight: f64,

    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_n_pilot")]
    pub n_pilot: usize,
    #[serde(default = "default_max_draws")]
    pub max_draws: usize,
    #[serde(default = "default_calibration_size")]
    pub calibration_size: usize,
    #[serde(default = "default_real_pool")]
    pub real_pool: usize,
    #[serde(default = "default_true")]
    pub restart_on_no_accept: bool,
    #[serde(default)]
    pub emit_traces: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config {
                field: "k".into(),
                message: "chain length must be >= 1".into(),
            });
        }
        if let Some(m) = self.missing_mode {
            if m >= 4 {
                return Err(Error::Config {
                    field: "missing_mode".into(),
                    message: format!("index {m} out of range 0..4"),
                });
            }
        }
        if self.drop_modes.iter().any(|&i| i >= 25) {
            return Err(Error::Config {
                field: "drop_modes".into(),
                message: "mode index out of range 0..25".into(),
            });
        }
        if !(0.0..1.0).contains(&self.bridge_weight) {
            return Err(Error::Config {
                field: "bridge_weight".into(),
                message: format!("must be in [0,1), got {}", self.bridge_weight),
            });
        }
        if self.calibration_size < 2 || !self.calibration_size.is_multiple_of(2) {
            return Err(Error::Config {
                field: "calibration_size".into(),
                message: "must be an even number >= 2".into(),
            });
        }
        if self.n_pilot == 0 {
            return Err(Error::Config {
                field: "n_pilot".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.max_draws == 0 {
            return Err(Error::Config {
                field: "max_draws".into(),
                message: "must be >= 1".into(),
            });
        }
        if self.real_pool == 0 {
            return Err(Error::Config {
                field: "real_pool".into(),
                message: "must be >= 1".into(),
            });
        }
        if matches!(self.discriminator, DiscriminatorSpec::Mlp { train_size, .. } if train_size == 0)
        {
            return Err(Error::Config {
                field: "discriminator.train_size".into(),
                message: "must be >= 1".into(),
            });
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
