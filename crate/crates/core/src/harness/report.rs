use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::builder::{ClaimReport, EventBound, OracleMode};
use crate::conv::TvProfile;
use crate::heavytail::{Calibration, SweepRow};
use crate::stats::Proportion;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStage {
    pub calibration: Calibration,
    pub holdout: Proportion,
    /// `1 - eps`.
    pub holdout_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSummary {
    pub mode: OracleMode,
    #[serde(with = "crate::group::safe_u64")]
    pub padding: u64,
    pub k: u64,
    #[serde(with = "crate::group::safe_u64")]
    pub n_max: u64,
    pub stored_steps: u64,
    pub revalidated: bool,
    /// Bit length of the largest shift among the stored `g_n`.
    pub max_shift_bits: u64,
    pub certificate_fallbacks: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub atoms: u64,
    pub stored_mass: f64,
    /// `P(s > n_max)`, not stored.
    pub deficit: f64,
    pub symmetric: bool,
    pub entropy: f64,
    /// `H(p) + ln 4`.
    pub entropy_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventStage {
    /// `(K, N)` calibrated at this `m`.
    pub k: u64,
    #[serde(with = "crate::group::safe_u64")]
    pub n: u64,
    pub bound: EventBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileStage {
    pub renormalized: bool,
    pub prune: f64,
    pub profile: TvProfile,
    /// Smallest `tv - error` over the computed rows.
    pub min_lower: f64,
    pub monotonicity_violations: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stages {
    pub calibration: Option<CalibrationStage>,
    pub construction: Option<ConstructionSummary>,
    pub measure: Option<MeasureSummary>,
    pub claim: Option<ClaimReport>,
    pub events: Vec<EventStage>,
    pub profile: Option<ProfileStage>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub holds: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Overflow,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailure,
    ResourceOverflow,
    StageError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub software_version: String,
    pub config: ExperimentConfig,
    pub stages: Stages,
    pub verdicts: Vec<Verdict>,
    pub failure: Option<StageFailure>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(config: ExperimentConfig) -> Self {
        Report {
            schema_version: REPORT_SCHEMA_VERSION,
            software_version: env!("CARGO_PKG_VERSION").into(),
            config,
            stages: Stages::default(),
            verdicts: Vec::new(),
            failure: None,
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn verdict(&mut self, name: impl Into<String>, holds: bool) {
        self.verdicts.push(Verdict { name: name.into(), holds });
    }

    pub fn outcome(&self) -> Outcome {
        match &self.failure {
            Some(f) if f.kind == FailureKind::Overflow => Outcome::ResourceOverflow,
            Some(_) => Outcome::StageError,
            None if self.verdicts.iter().any(|v| !v.holds) => Outcome::VerificationFailure,
            None if self.stages.profile.as_ref().is_some_and(|p| p.profile.overflow.is_some()) => {
                Outcome::ResourceOverflow
            }
            None => Outcome::Success,
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    /// The JSON form without wall-clock fields, for comparisons between runs.
    pub fn comparable_json(&self) -> Value {
        let mut v = self.to_json();
        strip_timings(&mut v);
        v
    }

    pub fn from_json(v: &Value) -> Result<Self, HarnessError> {
        let report: Report = serde_json::from_value(v.clone())?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(HarnessError::Config(format!("unsupported report schema {}", report.schema_version)));
        }
        Ok(report)
    }
}

/// Removes `timings_ms` and per-row `wall_ms` anywhere in a report.
pub fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timings_ms");
            map.remove("wall_ms");
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    CsvBundle,
}

pub fn write_profile_csv(profile: &TvProfile, path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    w.write_record(["m", "tv", "error", "support_size", "wall_ms"]).map_err(|e| HarnessError::csv(path, e))?;
    for r in &profile.rows {
        w.write_record([
            r.m.to_string(),
            format!("{:e}", r.tv),
            format!("{:e}", r.error),
            r.support_size.to_string(),
            format!("{:.3}", r.wall_ms),
        ])
        .map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_sweep_csv(sweep: &[SweepRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    for row in sweep {
        w.serialize(row).map_err(|e| HarnessError::csv(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Writes `report.json`, or `profile.csv` and `calibration_sweep.csv` (when
/// the stages ran) into `dir`. Returns the files written.
pub fn emit_report(report: &Report, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = dir.join("report.json");
            let text = serde_json::to_string_pretty(&report.to_json())?;
            fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
            written.push(path);
        }
        ReportFormat::CsvBundle => {
            if let Some(p) = &report.stages.profile {
                let path = dir.join("profile.csv");
                write_profile_csv(&p.profile, &path)?;
                written.push(path);
            }
            if let Some(c) = &report.stages.calibration {
                let path = dir.join("calibration_sweep.csv");
                write_sweep_csv(&c.calibration.sweep, &path)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
