use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use lampwalk_core::builder::{
    build, omega_mass as estimate_omega_mass, verify_claim, BuildError, BuildOptions, ClaimOptions,
    ConstructionState, OracleMode, Sampling,
};
use lampwalk_core::conv::ConvolveOptions;
use lampwalk_core::group::{bigint_to_json, GroupDescriptor};
use lampwalk_core::harness::{
    control_step, emit_report, profile_stage, run_pipeline, write_profile_csv, ExperimentConfig, HarnessError,
    Outcome, ProfileStage, ReportFormat, ResourceError, StepKind,
};
use lampwalk_core::heavytail::{
    calibrate_kn, estimate_e_mass, record_rates, HeavyTailDist, HeavyTailError, DEFAULT_DEPTH,
};
use lampwalk_core::rng::stage;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Verification(String),
    Overflow(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Overflow(_) => 3,
            Failure::Usage(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Overflow(m) => write!(f, "resource limit: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::InvalidParams(_) | BuildError::HeavyTail(HeavyTailError::InvalidParams(_)) => {
                Failure::Usage(e.to_string())
            }
            e if e.is_overflow() => Failure::Overflow(e.to_string()),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<HeavyTailError> for Failure {
    fn from(e: HeavyTailError) -> Self {
        match e {
            HeavyTailError::InvalidParams(_) | HeavyTailError::DepthTooSmall(_) => Failure::Usage(e.to_string()),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Toml(_) => Failure::Usage(e.to_string()),
            e => Failure::Other(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

type CmdResult = Result<(), Failure>;

fn cache_depth() -> Result<u64, Failure> {
    match std::env::var("LAMPWALK_CACHE_DEPTH") {
        Err(_) => Ok(DEFAULT_DEPTH),
        Ok(raw) => raw
            .parse()
            .map_err(|_| Failure::Usage(format!("LAMPWALK_CACHE_DEPTH = `{raw}` is not an integer"))),
    }
}

fn dist() -> Result<HeavyTailDist, Failure> {
    Ok(HeavyTailDist::new(cache_depth()?)?)
}

fn safe(x: u64) -> Value {
    bigint_to_json(&x.into())
}

fn write_json(path: &Path, v: &Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_state(path: &Path) -> Result<ConstructionState, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ConstructionState::from_json(&v).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn parse_group(name: &str) -> Result<GroupDescriptor, Failure> {
    GroupDescriptor::parse(name).map_err(|e| Failure::Usage(e.to_string()))
}

fn emit(v: &Value, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => write_json(p, v),
        None => {
            println!("{}", serde_json::to_string_pretty(v)?);
            Ok(())
        }
    }
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    m: u64,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long)]
    seed: u64,
    /// Largest n for the tail enclosure check.
    #[arg(long, default_value_t = 10_000)]
    tail_n: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn heavytail_verify(a: VerifyArgs) -> CmdResult {
    let d = dist()?;
    let c = d.normalizer();
    let cb = d.normalizer_bounds();
    let mut exceptions = Vec::new();
    for n in 1..=a.tail_n {
        let lo = d.tail_mass(n)?.lo;
        if lo < 4.0 * c * (n as f64).powf(-0.25) {
            exceptions.push(n);
        }
    }
    let cal = calibrate_kn(&d, a.eps, a.m, a.samples, a.seed)?;
    let holdout = estimate_e_mass(&d, &cal.params(), a.samples, a.seed, stage::HOLDOUT)?;
    let ks: Vec<u64> = (2..=8).map(|r| r * r).filter(|&k| k <= a.m).collect();
    let rates = record_rates(&d, &ks, a.samples, a.seed);
    let verdicts = [
        ("normalizer inside its enclosure", cb.lo <= c && c <= cb.hi),
        ("tail enclosure dominates 4 c n^(-1/4)", exceptions.is_empty()),
        ("holdout E-mass >= 1 - eps - 3 sigma", holdout.estimate >= 1.0 - a.eps - holdout.ci),
        ("record rates within bounds", rates.iter().all(|r| r.a_within_bound && r.inv_max_within_bound)),
    ];
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "heavytail verify",
        "params": { "eps": a.eps, "m": a.m, "samples": a.samples, "seed": safe(a.seed), "cache_depth": d.depth() },
        "normalizer": { "c": c, "lo": cb.lo, "hi": cb.hi },
        "tail_enclosure": { "checked": a.tail_n, "exceptions": exceptions },
        "calibration": cal,
        "holdout": holdout,
        "rates": rates,
        "verdicts": verdicts.iter().map(|(n, h)| json!({"name": n, "holds": h})).collect::<Vec<_>>(),
    });
    emit(&report, a.out.as_deref())?;
    eprintln!("K = {}, N = {}, holdout E-mass = {:.5} ± {:.5}", cal.k, cal.n, holdout.estimate, holdout.ci);
    match verdicts.iter().find(|(_, h)| !h) {
        Some((name, _)) => Err(Failure::Verification((*name).into())),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Certificate,
    Exact,
    Control,
}

impl From<ModeArg> for OracleMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Certificate => OracleMode::Certificate,
            ModeArg::Exact => OracleMode::Exact,
            ModeArg::Control => OracleMode::Control,
        }
    }
}

#[derive(Args, Debug)]
pub struct ConstructArgs {
    #[arg(long, default_value = "lamplighter")]
    group: String,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Last stored step; required unless --depth is given.
    #[arg(long, conflicts_with = "depth", required_unless_present = "depth")]
    nmax: Option<u64>,
    /// Stored steps past the padding.
    #[arg(long)]
    depth: Option<u64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Certificate)]
    mode: ModeArg,
    /// Padding length N (ignored with --calibrate).
    #[arg(long, default_value_t = 1)]
    padding: u64,
    /// K (ignored with --calibrate).
    #[arg(long, default_value_t = 1)]
    k: u64,
    /// Take (K, N) from a calibration run driven by --seed.
    #[arg(long)]
    calibrate: bool,
    #[arg(long, default_value_t = 256)]
    calibration_m: u64,
    #[arg(long, default_value_t = 20_000)]
    calibration_samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    search_budget: Option<u64>,
    #[arg(long)]
    ball_budget: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn construct(a: ConstructArgs) -> CmdResult {
    let group = parse_group(&a.group)?;
    let (padding, k) = if a.calibrate {
        let cal = calibrate_kn(&dist()?, a.eps, a.calibration_m, a.calibration_samples, a.seed)?;
        (cal.n, cal.k)
    } else {
        (a.padding, a.k)
    };
    let mut opts = BuildOptions::new(group, a.eps, padding, k, a.nmax.unwrap_or(0), a.mode.into());
    if let Some(depth) = a.depth {
        opts = opts.with_depth(depth);
    }
    if let Some(b) = a.search_budget {
        opts.search_budget = b;
    }
    if let Some(b) = a.ball_budget {
        opts.ball_budget = b;
    }
    let state = build(&opts)?;
    state.validate()?;
    write_json(&a.out, &state.to_json())?;
    println!(
        "{} state: N = {}, K = {}, n_max = {}, {} stored steps, mode {}",
        group,
        state.padding(),
        state.k(),
        state.n_max(),
        state.steps().len(),
        state.mode()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ClaimArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 64)]
    m: u64,
    #[arg(long, default_value_t = 10_000)]
    pairs: u64,
    #[arg(long)]
    seed: u64,
    /// Replace h by the identity; every word then matches itself.
    #[arg(long)]
    identity_h: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn claim_check(a: ClaimArgs) -> CmdResult {
    let state = read_state(&a.state)?;
    let mut opts = ClaimOptions::new(a.m, a.pairs, a.seed);
    if a.identity_h {
        opts.h_override = Some(state.group().identity());
    }
    let report = verify_claim(&state, &dist()?, &opts)?;
    emit(&json!({ "schema_version": SCHEMA_VERSION, "claim": report }), a.out.as_deref())?;
    eprintln!(
        "{} equalities over {} ordered pairs (acceptance {:.4})",
        report.equalities, report.pairs_compared, report.acceptance.estimate
    );
    let ok = if a.identity_h { report.self_equalities == report.pool } else { report.holds() };
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{} equalities h r(alpha) = r(beta)", report.equalities)))
    }
}

#[derive(Args, Debug)]
pub struct OmegaArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    m: u64,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Condition every index on s <= n_max.
    #[arg(long)]
    truncated: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn omega_mass(a: OmegaArgs) -> CmdResult {
    let state = read_state(&a.state)?;
    let sampling = if a.truncated { Sampling::AtMost(state.n_max()) } else { Sampling::Untruncated };
    let params = state.params(a.m);
    let est = estimate_omega_mass(&dist()?, &params, a.samples, a.seed, sampling)?;
    emit(&json!({ "schema_version": SCHEMA_VERSION, "omega": est }), a.out.as_deref())?;
    if est.above_floor {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "mass {:.5} ± {:.5} is below 1 - 2 eps",
            est.mass.estimate, est.mass.ci
        )))
    }
}

fn finish_profile(stage: &ProfileStage, out: &Path) -> CmdResult {
    write_profile_csv(&stage.profile, out).map_err(Failure::from)?;
    let rows = &stage.profile.rows;
    if let Some(last) = rows.last() {
        eprintln!("m = {}: tv = {:.6e} ± {:.3e}, {} atoms", last.m, last.tv, last.error, last.support_size);
    }
    if let Some(msg) = &stage.profile.overflow {
        return Err(Failure::Overflow(format!("profile stopped at m = {}: {msg}", stage.profile.reached())));
    }
    if !stage.monotonicity_violations.is_empty() {
        return Err(Failure::Verification(format!(
            "profile increases at m = {:?}",
            stage.monotonicity_violations
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 12)]
    mmax: usize,
    #[arg(long, default_value_t = 0.0)]
    prune: f64,
    /// Rescale the truncated measure to mass one.
    #[arg(long)]
    renormalize: bool,
    #[arg(long)]
    support_cap: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

pub fn tv_profile(a: ProfileArgs) -> CmdResult {
    if a.mmax == 0 || a.prune.is_nan() || a.prune < 0.0 {
        return Err(Failure::Usage("need --mmax >= 1 and --prune >= 0".into()));
    }
    let state = read_state(&a.state)?;
    let mu = state.full_measure(&dist()?, a.renormalize)?;
    let mut opts = ConvolveOptions::with_prune(a.prune);
    if let Some(cap) = a.support_cap {
        opts.support_cap = cap;
    }
    let stage = profile_stage(&mu, state.h(), a.mmax, &opts).map_err(|e| Failure::Other(e.into()))?;
    finish_profile(&stage, &a.out)
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StepArg {
    Lazy,
    Simple,
}

#[derive(Args, Debug)]
pub struct ControlArgs {
    #[arg(long, default_value = "z")]
    group: String,
    #[arg(long, value_enum, default_value_t = StepArg::Lazy)]
    step: StepArg,
    #[arg(long, default_value_t = 4096)]
    mmax: usize,
    /// Primary coordinate of h.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    h: i64,
    #[arg(long, default_value_t = 0.0)]
    prune: f64,
    #[arg(long)]
    out: PathBuf,
}

pub fn control(a: ControlArgs) -> CmdResult {
    let group = parse_group(&a.group)?;
    if a.mmax == 0 || a.h == 0 || a.prune.is_nan() || a.prune < 0.0 {
        return Err(Failure::Usage("need --mmax >= 1, --h != 0 and --prune >= 0".into()));
    }
    let kind = match a.step {
        StepArg::Lazy => StepKind::Lazy,
        StepArg::Simple => StepKind::Simple,
    };
    let h = group.along_primary(a.h.into());
    let stage = profile_stage(&control_step(group, kind), &h, a.mmax, &ConvolveOptions::with_prune(a.prune))
        .map_err(|e| Failure::Other(e.into()))?;
    finish_profile(&stage, &a.out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
    All,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::All)]
    format: FormatArg,
}

pub fn pipeline(a: PipelineArgs) -> CmdResult {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if std::env::var_os("LAMPWALK_CACHE_DEPTH").is_some() {
        cfg.cache_depth = cache_depth()?;
    }
    let report = run_pipeline(&cfg);
    if a.format != FormatArg::Csv {
        emit_report(&report, ReportFormat::Json, &a.out_dir)?;
    }
    if a.format != FormatArg::Json {
        emit_report(&report, ReportFormat::CsvBundle, &a.out_dir)?;
    }
    for v in &report.verdicts {
        eprintln!("{} {}", if v.holds { "ok  " } else { "FAIL" }, v.name);
    }
    let failure = report.failure.as_ref().map(|f| format!("stage `{}`: {}", f.stage, f.message));
    match report.outcome() {
        Outcome::Success => Ok(()),
        Outcome::VerificationFailure => {
            let names: Vec<&str> = report.verdicts.iter().filter(|v| !v.holds).map(|v| v.name.as_str()).collect();
            Err(Failure::Verification(names.join("; ")))
        }
        Outcome::ResourceOverflow => Err(Failure::Overflow(failure.unwrap_or_else(|| "profile truncated".into()))),
        Outcome::StageError => Err(Failure::Other(anyhow::anyhow!(failure.unwrap_or_default()))),
    }
}
