use std::time::Instant;

use num_bigint::BigInt;

use super::config::{ExperimentConfig, StepKind};
use super::report::{
    CalibrationStage, ConstructionSummary, EventStage, FailureKind, MeasureSummary, ProfileStage, Report,
    StageFailure,
};
use super::ResourceError;
use crate::builder::{
    build, event_tv_bound, verify_claim, BuildOptions, ClaimOptions, ExactSource, Obligation,
};
use crate::conv::{tv_profile, ConvError, ConvolveOptions, SparseMeasure};
use crate::group::{GroupDescriptor, GroupElement};
use crate::heavytail::{calibrate_kn, estimate_e_mass, HeavyTailDist};
use crate::rng::stage;

/// Slack added to the error bars when judging monotonicity.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Uniform step on the standard generators, with the identity added for
/// [`StepKind::Lazy`].
pub fn control_step(group: GroupDescriptor, kind: StepKind) -> SparseMeasure {
    let mut atoms = group.generators();
    if kind == StepKind::Lazy {
        atoms.insert(0, group.identity());
    }
    let w = 1.0 / atoms.len() as f64;
    SparseMeasure::from_atoms(group, atoms.into_iter().map(|g| (g, w))).expect("uniform weights are valid")
}

pub fn profile_stage(
    mu: &SparseMeasure,
    h: &GroupElement,
    m_max: usize,
    opts: &ConvolveOptions,
) -> Result<ProfileStage, ConvError> {
    let profile = tv_profile(mu, h, m_max, opts)?;
    let min_lower = profile.rows.iter().map(|r| r.tv - r.error).fold(f64::INFINITY, f64::min);
    Ok(ProfileStage {
        renormalized: mu.is_renormalized(),
        prune: opts.prune,
        monotonicity_violations: profile.monotonicity_violations(MONOTONE_SLACK),
        min_lower,
        profile,
    })
}

fn run<T, E>(report: &mut Report, name: &str, f: impl FnOnce() -> Result<T, E>) -> Result<T, StageFailure>
where
    E: std::fmt::Display + ResourceError,
{
    let start = Instant::now();
    let out = f();
    report.timings_ms.insert(name.into(), start.elapsed().as_secs_f64() * 1e3);
    out.map_err(|e| StageFailure {
        stage: name.into(),
        kind: if e.is_overflow() { FailureKind::Overflow } else { FailureKind::Error },
        message: e.to_string(),
    })
}

/// Runs every stage in order and stops at the first failing one. The report
/// is returned either way; see [`Report::outcome`].
pub fn run_pipeline(cfg: &ExperimentConfig) -> Report {
    let mut report = Report::new(cfg.clone());
    if let Err(f) = run_stages(cfg, &mut report) {
        report.failure = Some(f);
    }
    report
}

fn run_stages(cfg: &ExperimentConfig, report: &mut Report) -> Result<(), StageFailure> {
    let group = run(report, "config", || cfg.validate().and_then(|_| cfg.descriptor()))?;
    let opts = ConvolveOptions { prune: cfg.profile.prune, support_cap: cfg.profile.support_cap };
    if !group.is_icc() {
        let control = cfg.control.as_ref().expect("validated");
        let h = group.along_primary(BigInt::from(control.h));
        let step = control_step(group, control.step);
        let stage = run(report, "control", || profile_stage(&step, &h, control.m_max, &opts))?;
        report.verdict("profile nonincreasing within error bars", stage.monotonicity_violations.is_empty());
        let rows = &stage.profile.rows;
        report.verdict("profile decays", rows.len() > 1 && rows[rows.len() - 1].tv < rows[0].tv);
        report.stages.profile = Some(stage);
        return Ok(());
    }

    let dist = run(report, "tables", || HeavyTailDist::new(cfg.cache_depth))?;
    let floor = 2.0 - 8.0 * cfg.eps;

    let c = &cfg.calibration;
    let cal = run(report, "calibration", || {
        let cal = calibrate_kn(&dist, cfg.eps, c.m, c.samples, cfg.seed)?;
        let holdout = estimate_e_mass(&dist, &cal.params(), c.holdout_samples, cfg.seed, stage::HOLDOUT)?;
        Ok::<_, crate::heavytail::HeavyTailError>(CalibrationStage { calibration: cal, holdout, holdout_floor: 1.0 - cfg.eps })
    })?;
    report.verdict(
        "holdout E-mass >= 1 - eps - 3 sigma",
        cal.holdout.estimate >= cal.holdout_floor - cal.holdout.ci,
    );
    let (k, n) = (cal.calibration.k, cal.calibration.n);
    report.stages.calibration = Some(cal);

    let state = run(report, "construction", || {
        build(&BuildOptions::new(group, cfg.eps, n, k, 0, cfg.mode).with_depth(cfg.construction.depth))
    })?;
    let revalidated = state.validate().is_ok();
    report.verdict("construction obligations revalidate", revalidated);
    report.stages.construction = Some(ConstructionSummary {
        mode: state.mode(),
        padding: state.padding(),
        k: state.k(),
        n_max: state.n_max(),
        stored_steps: state.steps().len() as u64,
        revalidated,
        max_shift_bits: state.steps().iter().map(|s| s.g.primary().bits()).max().unwrap_or(0),
        certificate_fallbacks: state
            .steps()
            .iter()
            .filter(|s| matches!(&s.obligation, Obligation::Exact(r) if r.source == ExactSource::CertificateFallback))
            .count() as u64,
    });

    let mu = run(report, "measure", || state.full_measure(&dist, false))?;
    let entropy_bound = run(report, "entropy", || dist.entropy(1e-6))? + 4f64.ln();
    let summary = MeasureSummary {
        atoms: mu.len() as u64,
        stored_mass: mu.total_mass(),
        deficit: mu.lost(),
        symmetric: mu.is_symmetric(0.0),
        entropy: mu.entropy(),
        entropy_bound,
    };
    report.verdict("measure symmetric", summary.symmetric);
    report.verdict("stored mass + deficit = 1", (summary.stored_mass + summary.deficit - 1.0).abs() <= 1e-12);
    report.verdict("entropy <= H(p) + ln 4", summary.entropy <= summary.entropy_bound);
    report.stages.measure = Some(summary);

    if let Some(cc) = &cfg.claim {
        let claim = run(report, "claim", || {
            let small = build(&BuildOptions::new(group, cfg.eps, cc.n, cc.k, cc.n_max, cfg.mode))?;
            verify_claim(&small, &dist, &ClaimOptions::new(cc.m, cc.pairs, cfg.seed))
        })?;
        report.verdict("claim: h r(alpha) != r(beta) on every sampled pair", claim.holds());
        report.stages.claim = Some(claim);
    }

    let main_cal = report.stages.calibration.as_ref().map(|c| c.calibration.clone());
    for &m in &cfg.events.m {
        let name = format!("event m={m}");
        let ev = run(report, &name, || {
            let params = match &main_cal {
                Some(main) if main.m == m => main.params(),
                _ => calibrate_kn(&dist, cfg.eps, m, c.samples, cfg.seed)?.params(),
            };
            let bound = event_tv_bound(&dist, &params, cfg.events.samples, cfg.seed)?;
            Ok::<_, crate::builder::BuildError>(EventStage { k: params.k, n: params.n, bound })
        })?;
        report.verdict(format!("event bound at m = {m} >= 2 - 8 eps - CI"), ev.bound.estimate >= floor - ev.bound.ci);
        report.stages.events.push(ev);
    }

    let shown = if cfg.profile.renormalize { mu.renormalized() } else { mu };
    let stage = run(report, "profile", || profile_stage(&shown, state.h(), cfg.profile.m_max, &opts))?;
    report.verdict("profile nonincreasing within error bars", stage.monotonicity_violations.is_empty());
    report.verdict("profile stays above 2 - 8 eps", stage.min_lower >= floor);
    report.stages.profile = Some(stage);
    Ok(())
}
