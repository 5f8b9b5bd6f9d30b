use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::builder::OracleMode;
use crate::conv::DEFAULT_SUPPORT_CAP;
use crate::group::GroupDescriptor;
use crate::heavytail::DEFAULT_DEPTH;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: String,
    pub eps: f64,
    #[serde(with = "crate::group::safe_u64")]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: OracleMode,
    /// Depth of the exact survival table.
    #[serde(default = "default_cache_depth")]
    pub cache_depth: u64,
    pub calibration: CalibrationConfig,
    pub construction: ConstructionConfig,
    /// Separate small state for the pairwise claim check.
    pub claim: Option<ClaimConfig>,
    pub events: EventsConfig,
    pub profile: ProfileConfig,
    pub control: Option<ControlConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub m: u64,
    pub samples: u64,
    pub holdout_samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionConfig {
    /// Stored steps past the calibrated padding.
    pub depth: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimConfig {
    pub k: u64,
    pub n: u64,
    pub n_max: u64,
    pub m: u64,
    pub pairs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsConfig {
    pub m: Vec<u64>,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub m_max: usize,
    #[serde(default)]
    pub prune: f64,
    /// Rescale the truncated measure to mass one.
    #[serde(default)]
    pub renormalize: bool,
    #[serde(default = "default_support_cap")]
    pub support_cap: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    /// Uniform on the generators and the identity.
    Lazy,
    /// Uniform on the generators.
    Simple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub step: StepKind,
    pub m_max: usize,
    /// Primary coordinate of `h`.
    pub h: i64,
}

fn default_mode() -> OracleMode {
    OracleMode::Certificate
}

fn default_cache_depth() -> u64 {
    DEFAULT_DEPTH
}

fn default_support_cap() -> usize {
    DEFAULT_SUPPORT_CAP
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn descriptor(&self) -> Result<GroupDescriptor, HarnessError> {
        GroupDescriptor::parse(&self.group).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let group = self.descriptor()?;
        if !(self.eps > 0.0 && self.eps < 0.125) {
            return bad(format!("eps = {} is outside (0, 1/8)", self.eps));
        }
        if self.cache_depth < 16 {
            return bad("cache_depth must be at least 16".into());
        }
        let counts = [
            ("calibration.m", self.calibration.m),
            ("calibration.samples", self.calibration.samples),
            ("calibration.holdout_samples", self.calibration.holdout_samples),
            ("events.samples", self.events.samples),
            ("profile.m_max", self.profile.m_max as u64),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.events.m.iter().any(|&m| m < 4) {
            return bad("every events.m must be at least 4".into());
        }
        if !(self.profile.prune >= 0.0 && self.profile.prune.is_finite()) {
            return bad(format!("profile.prune = {} is not a threshold", self.profile.prune));
        }
        if let Some(c) = &self.claim {
            if c.k == 0 || c.n == 0 || c.pairs == 0 || c.n_max < c.n || c.m <= c.k.max(c.n) {
                return bad("claim needs K, N, pairs >= 1, n_max >= N and m > max(K, N)".into());
            }
        }
        if let Some(c) = &self.control {
            if c.m_max == 0 || c.h == 0 {
                return bad("control needs m_max >= 1 and h != 0".into());
            }
        }
        if !group.is_icc() && self.control.is_none() {
            return bad(format!("{group} is a control group and needs a [control] table"));
        }
        if group.is_icc() && self.mode == OracleMode::Control {
            return bad("control mode is reserved for the non-ICC groups".into());
        }
        Ok(())
    }
}
