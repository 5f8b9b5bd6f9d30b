//! Configuration, end-to-end pipeline and report emission.
//!
//! A run is fully determined by its [`ExperimentConfig`]: every random stage
//! draws from streams derived from the single master seed (see
//! [`crate::rng`]), so reports differ between runs only in wall-clock fields.

mod config;
mod pipeline;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    CalibrationConfig, ClaimConfig, ConstructionConfig, ControlConfig, EventsConfig, ExperimentConfig,
    ProfileConfig, StepKind,
};
pub use pipeline::{control_step, profile_stage, run_pipeline, MONOTONE_SLACK};
pub use report::{
    emit_report, strip_timings, write_profile_csv, write_sweep_csv, CalibrationStage, ConstructionSummary,
    EventStage, FailureKind, MeasureSummary, Outcome, ProfileStage, Report, ReportFormat, StageFailure, Stages,
    Verdict, REPORT_SCHEMA_VERSION,
};

use crate::builder::BuildError;
use crate::conv::ConvError;
use crate::group::GroupError;
use crate::heavytail::HeavyTailError;
use crate::switching::SwitchingError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("configuration parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        HarnessError::Csv { path: path.to_path_buf(), source }
    }
}

/// Whether an error means a size cap or enumeration budget was hit, as
/// opposed to invalid input or a failed check.
pub trait ResourceError {
    fn is_overflow(&self) -> bool;
}

impl ResourceError for GroupError {
    fn is_overflow(&self) -> bool {
        matches!(self, GroupError::BudgetExceeded { .. })
    }
}

impl ResourceError for ConvError {
    fn is_overflow(&self) -> bool {
        matches!(self, ConvError::Overflow { .. })
    }
}

impl ResourceError for SwitchingError {
    fn is_overflow(&self) -> bool {
        match self {
            SwitchingError::Group(e) => e.is_overflow(),
            _ => false,
        }
    }
}

impl ResourceError for HeavyTailError {
    fn is_overflow(&self) -> bool {
        false
    }
}

impl ResourceError for HarnessError {
    fn is_overflow(&self) -> bool {
        false
    }
}

impl ResourceError for BuildError {
    fn is_overflow(&self) -> bool {
        match self {
            BuildError::Oracle { source, .. } => source.is_overflow(),
            BuildError::Group(e) => e.is_overflow(),
            BuildError::Conv(e) => e.is_overflow(),
            _ => false,
        }
    }
}
