//! Inductive construction of the step measures.
//!
//! Steps `n <= N` are padding: `a_n = g_n = e`. Every later step stores
//! `a_n`, the `(n - N)`-th element of the enumeration, and an element `g_n`
//! chosen against `C_{n-1} = B_{n-1} ∪ {h, h^{-1}}`, where `B_n` collects
//! `a_j^{±1}` and `g_j^{±1}` for `j <= n`. The step measure `mu_n` puts
//! `eps 2^{-n} / 2` on each of `a_n^{±1}` and the rest on `g_n^{±1}`.
//!
//! Only the steps past the padding are stored, so `N` may be huge.

mod claim;
mod omega;

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::conv::{ConvError, SparseMeasure};
use crate::group::{
    bigint_from_json, bigint_to_json, product_ball, BallOracle, CoordBounds, Enumerator, GroupDescriptor,
    GroupElement, GroupError, SymmetricSet,
};
use crate::heavytail::{HeavyTailDist, HeavyTailError};
use crate::switching::{
    find_super_switching_with, is_super_switching, pick_escape_element, pick_super_switching_lamplighter,
    u64_string, EscapeCertificate, SwitchingCertificate, SwitchingError,
};

pub use claim::{
    event_tv_bound, omega_mass, pushforward_exact, verify_claim, ClaimOptions, ClaimReport, EventBound,
    OmegaMass,
};
pub use omega::{
    in_omega_eps, ln_nu_weight, nu_weight, record_indices, sample_omega, OmegaSample, RecordChain, Sampling,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest step index accepted, keeping `8n + 1` far from overflow.
pub const MAX_STEP: u64 = 1 << 60;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid construction parameters: {0}")]
    InvalidParams(String),
    #[error("oracle failure at step {step}: {source}")]
    Oracle {
        step: u64,
        #[source]
        source: SwitchingError,
    },
    #[error("step {n} lies past the truncation depth n_max = {n_max}")]
    Truncation { n: u64, n_max: u64 },
    #[error("stored state is inconsistent at step {step}: {reason}")]
    Inconsistent { step: u64, reason: String },
    #[error("unsupported state schema version {0}")]
    Schema(u32),
    #[error("claim sampling starved: {accepted} of {attempts} draws accepted")]
    Starved { accepted: u64, attempts: u64 },
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    HeavyTail(#[from] HeavyTailError),
    #[error(transparent)]
    Conv(#[from] ConvError),
    #[error("state decoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Coordinate certificates (lamplighter only).
    Certificate,
    /// Enumeration search checked against explicit balls.
    Exact,
    /// Escape elements for the non-ICC controls.
    Control,
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMode::Certificate => "certificate",
            OracleMode::Exact => "exact",
            OracleMode::Control => "control",
        })
    }
}

impl FromStr for OracleMode {
    type Err = BuildError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "certificate" => Ok(OracleMode::Certificate),
            "exact" => Ok(OracleMode::Exact),
            "control" => Ok(OracleMode::Control),
            other => Err(BuildError::InvalidParams(format!("unknown oracle mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactSource {
    Search,
    /// The search budget ran out; the certificate pick was used after it
    /// passed the same explicit checks.
    CertificateFallback,
}

/// Outcome of the explicit checks for one step in exact mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactRecord {
    pub source: ExactSource,
    #[serde(with = "u64_string")]
    pub searched: u64,
    #[serde(with = "u64_string")]
    pub switching_set_size: u64,
    #[serde(with = "u64_string")]
    pub ball_radius: u64,
    pub super_switching: bool,
    pub outside_ball: bool,
    /// The certificate pick for the same step, checked the same way.
    pub certificate: SwitchingCertificate,
    pub certificate_super_switching: bool,
    pub certificate_outside_ball: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Obligation {
    Certificate(SwitchingCertificate),
    Exact(ExactRecord),
    Control(EscapeCertificate),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub n: u64,
    pub a: GroupElement,
    pub g: GroupElement,
    pub obligation: Obligation,
    /// Bounds of `C_{n-1}`, the set `g` was chosen against.
    pub c_bounds: CoordBounds,
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub group: GroupDescriptor,
    /// Defaults to the lamp at the origin, or the first generator for the
    /// controls.
    pub h: Option<GroupElement>,
    pub eps: f64,
    /// Padding length `N`.
    pub padding: u64,
    pub k: u64,
    pub n_max: u64,
    pub mode: OracleMode,
    /// Enumeration indices scanned per step in exact mode.
    pub search_budget: u64,
    /// Largest explicit ball enumerated in exact mode.
    pub ball_budget: usize,
}

impl BuildOptions {
    pub fn new(group: GroupDescriptor, eps: f64, padding: u64, k: u64, n_max: u64, mode: OracleMode) -> Self {
        BuildOptions {
            group,
            h: None,
            eps,
            padding,
            k,
            n_max,
            mode,
            search_budget: 200_000,
            ball_budget: 4_000_000,
        }
    }

    /// Sets `n_max` to `N + depth`.
    pub fn with_depth(mut self, depth: u64) -> Self {
        self.n_max = self.padding.saturating_add(depth);
        self
    }
}

pub fn default_h(group: GroupDescriptor) -> GroupElement {
    match group {
        GroupDescriptor::Lamplighter => GroupElement::lamplighter([0i64], 0),
        other => other.generators().swap_remove(0),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstructionState {
    group: GroupDescriptor,
    h: GroupElement,
    eps: f64,
    padding: u64,
    k: u64,
    n_max: u64,
    mode: OracleMode,
    steps: Vec<Step>,
}

fn validate_common(group: GroupDescriptor, h: &GroupElement, eps: f64, padding: u64, k: u64, n_max: u64) -> Result<(), BuildError> {
    if !(eps > 0.0 && eps < 0.125) {
        return Err(BuildError::InvalidParams(format!("eps = {eps} is outside (0, 1/8)")));
    }
    if h.descriptor() != group {
        return Err(BuildError::InvalidParams(format!("h = {h} is not an element of {group}")));
    }
    if h.is_identity() {
        return Err(BuildError::InvalidParams("h must not be the identity".into()));
    }
    if padding == 0 || k == 0 {
        return Err(BuildError::InvalidParams("K and N must be at least 1".into()));
    }
    if n_max < padding || n_max > MAX_STEP {
        return Err(BuildError::InvalidParams(format!(
            "n_max = {n_max} must lie between N = {padding} and {MAX_STEP}"
        )));
    }
    Ok(())
}

fn exact_step(
    prev: u64,
    c_set: &SymmetricSet,
    c_bounds: &CoordBounds,
    opts: &BuildOptions,
) -> Result<(GroupElement, ExactRecord), SwitchingError> {
    let x = product_ball(c_set, (2 * prev + 1) as usize, opts.ball_budget)?;
    let radius = 8 * prev + 1;
    let ball = BallOracle::new(c_set, radius as usize, opts.ball_budget)?;
    let (cert_g, certificate) = pick_super_switching_lamplighter(prev, c_bounds);
    let certificate_super_switching = is_super_switching(&cert_g, &x);
    let certificate_outside_ball = !ball.contains(&cert_g);
    let mut record = ExactRecord {
        source: ExactSource::Search,
        searched: opts.search_budget,
        switching_set_size: x.len() as u64,
        ball_radius: radius,
        super_switching: false,
        outside_ball: false,
        certificate,
        certificate_super_switching,
        certificate_outside_ball,
    };
    let g = match find_super_switching_with(&x, |g| ball.contains(g), opts.search_budget) {
        Ok(g) => g,
        Err(SwitchingError::SearchFailure { .. }) => {
            if !(certificate_super_switching && certificate_outside_ball) {
                return Err(SwitchingError::InvalidCertificate(
                    "certificate pick fails the explicit checks".into(),
                ));
            }
            record.source = ExactSource::CertificateFallback;
            cert_g
        }
        Err(e) => return Err(e),
    };
    record.super_switching = is_super_switching(&g, &x);
    record.outside_ball = !ball.contains(&g);
    Ok((g, record))
}

pub fn build(opts: &BuildOptions) -> Result<ConstructionState, BuildError> {
    let group = opts.group;
    let h = opts.h.clone().unwrap_or_else(|| default_h(group));
    validate_common(group, &h, opts.eps, opts.padding, opts.k, opts.n_max)?;
    match opts.mode {
        OracleMode::Control => {}
        _ if !group.is_icc() => {
            return Err(BuildError::InvalidParams(format!(
                "{group} has finite conjugacy classes; only control mode applies"
            )))
        }
        _ => {}
    }

    let h_pair = [h.clone(), h.invert()];
    let mut b_bounds = CoordBounds::zero();
    let mut b_elems = vec![group.identity()];
    let mut en = Enumerator::new(group);
    let mut steps = Vec::with_capacity((opts.n_max - opts.padding) as usize);
    for n in opts.padding + 1..=opts.n_max {
        let prev = n - 1;
        let c_bounds = b_bounds.merged(&CoordBounds::of(&h_pair));
        let oracle_err = |source| BuildError::Oracle { step: n, source };
        let (g, obligation) = match opts.mode {
            OracleMode::Certificate => {
                if group != GroupDescriptor::Lamplighter {
                    return Err(oracle_err(SwitchingError::UnsupportedGroup(group)));
                }
                let (g, cert) = pick_super_switching_lamplighter(prev, &c_bounds);
                (g, Obligation::Certificate(cert))
            }
            OracleMode::Exact => {
                let c_set = SymmetricSet::closure(b_elems.iter().cloned().chain(h_pair.iter().cloned()));
                let (g, record) = exact_step(prev, &c_set, &c_bounds, opts).map_err(oracle_err)?;
                (g, Obligation::Exact(record))
            }
            OracleMode::Control => {
                let (g, cert) = pick_escape_element(group, prev, &c_bounds);
                (g, Obligation::Control(cert))
            }
        };
        let a = en.get(n - opts.padding).clone();
        for x in [&a, &g] {
            b_bounds.absorb(x);
            b_bounds.absorb(&x.invert());
        }
        if opts.mode == OracleMode::Exact {
            b_elems.extend([a.clone(), a.invert(), g.clone(), g.invert()]);
        }
        steps.push(Step { n, a, g, obligation, c_bounds });
    }
    Ok(ConstructionState {
        group,
        h,
        eps: opts.eps,
        padding: opts.padding,
        k: opts.k,
        n_max: opts.n_max,
        mode: opts.mode,
        steps,
    })
}

impl ConstructionState {
    pub fn group(&self) -> GroupDescriptor {
        self.group
    }

    pub fn h(&self) -> &GroupElement {
        &self.h
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Padding length `N`.
    pub fn padding(&self) -> u64 {
        self.padding
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    /// The stored steps `N + 1..=n_max`.
    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// `None` inside the padding.
    pub fn step(&self, n: u64) -> Result<Option<&Step>, BuildError> {
        if n == 0 {
            return Err(BuildError::InvalidParams("steps are indexed from 1".into()));
        }
        if n > self.n_max {
            return Err(BuildError::Truncation { n, n_max: self.n_max });
        }
        Ok(if n <= self.padding { None } else { Some(&self.steps[(n - self.padding - 1) as usize]) })
    }

    /// `f_n(j)`: `a_n`, `a_n^{-1}`, `g_n`, `g_n^{-1}` for `j = 1..=4`.
    pub fn step_atom(&self, n: u64, j: u8) -> Result<GroupElement, BuildError> {
        if !(1..=4).contains(&j) {
            return Err(BuildError::InvalidParams(format!("atom index {j} outside 1..=4")));
        }
        Ok(match self.step(n)? {
            None => self.group.identity(),
            Some(step) => match j {
                1 => step.a.clone(),
                2 => step.a.invert(),
                3 => step.g.clone(),
                _ => step.g.invert(),
            },
        })
    }

    /// `nu_n(j)`.
    pub fn step_weight(&self, n: u64, j: u8) -> Result<f64, BuildError> {
        self.step(n)?;
        nu_weight(self.eps, n, j)
    }

    /// Bounds of `C_n`, for any `n` with `N <= n < n_max`.
    pub fn c_bounds(&self, n: u64) -> Result<CoordBounds, BuildError> {
        let step = self.step(n + 1)?.ok_or_else(|| {
            BuildError::InvalidParams(format!("C_{n} lies inside the padding (N = {})", self.padding))
        })?;
        Ok(step.c_bounds.clone())
    }

    /// `sum_{n <= n_max} p(n) mu_n` with the tail mass `P(s > n_max)` kept
    /// as the lost budget, or rescaled to a probability measure.
    pub fn full_measure(&self, dist: &HeavyTailDist, renormalize: bool) -> Result<SparseMeasure, BuildError> {
        let mut mu = SparseMeasure::zero(self.group);
        mu.add(self.group.identity(), 1.0 - dist.survival(self.padding + 1))?;
        for step in &self.steps {
            let p = dist.pmf(step.n)?;
            for j in 1..=4u8 {
                mu.add(self.step_atom(step.n, j)?, p * nu_weight(self.eps, step.n, j)?)?;
            }
        }
        mu.add_lost(dist.survival(self.n_max.saturating_add(1)));
        Ok(if renormalize { mu.renormalized() } else { mu })
    }

    /// Re-derives every stored bound and re-checks every obligation that
    /// can be checked from the stored data.
    pub fn validate(&self) -> Result<(), BuildError> {
        validate_common(self.group, &self.h, self.eps, self.padding, self.k, self.n_max)?;
        if self.steps.len() as u64 != self.n_max - self.padding {
            return Err(BuildError::Inconsistent {
                step: self.n_max,
                reason: format!("expected {} stored steps, found {}", self.n_max - self.padding, self.steps.len()),
            });
        }
        let h_bounds = CoordBounds::of(&[self.h.clone(), self.h.invert()]);
        let mut b_bounds = CoordBounds::zero();
        let mut en = Enumerator::new(self.group);
        for step in &self.steps {
            let n = step.n;
            let bad = |reason: String| BuildError::Inconsistent { step: n, reason };
            if step.a.descriptor() != self.group || step.g.descriptor() != self.group {
                return Err(bad("atom from another group".into()));
            }
            if *en.get(n - self.padding) != step.a {
                return Err(bad("a_n is not the enumerated element".into()));
            }
            let c_bounds = b_bounds.merged(&h_bounds);
            if c_bounds != step.c_bounds {
                return Err(bad("stored bounds of C_{n-1} do not match".into()));
            }
            match &step.obligation {
                Obligation::Certificate(cert) | Obligation::Exact(ExactRecord { certificate: cert, .. }) => {
                    if cert.n != n - 1 || cert.r_t != c_bounds.shift || cert.r_s != c_bounds.spread {
                        return Err(bad("certificate bounds disagree with C_{n-1}".into()));
                    }
                    cert.revalidate().map_err(|e| BuildError::Oracle { step: n, source: e })?;
                }
                Obligation::Control(cert) => {
                    if cert.n != n - 1 || cert.r_shift != c_bounds.shift || !cert.holds() {
                        return Err(bad("escape certificate does not hold".into()));
                    }
                    if step.g != self.group.along_primary(cert.primary.clone()) {
                        return Err(bad("g_n differs from the escape element".into()));
                    }
                }
            }
            match &step.obligation {
                Obligation::Certificate(cert) if step.g != cert.element() => {
                    return Err(bad("g_n differs from the certified element".into()));
                }
                Obligation::Exact(rec) => {
                    if !(rec.super_switching && rec.outside_ball) {
                        return Err(bad("exact checks recorded as failing".into()));
                    }
                    if rec.source == ExactSource::CertificateFallback && step.g != rec.certificate.element() {
                        return Err(bad("fallback g_n differs from the certified element".into()));
                    }
                }
                _ => {}
            }
            for x in [&step.a, &step.g] {
                b_bounds.absorb(x);
                b_bounds.absorb(&x.invert());
            }
        }
        Ok(())
    }

    /// Canonical JSON: schema version, parameters and the stored steps.
    /// Elements use the canonical element encoding; certificates write every
    /// integer as a string.
    pub fn to_json(&self) -> Value {
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|s| {
                serde_json::json!({
                    "n": u64_json(s.n),
                    "a": s.a.to_json(),
                    "g": s.g.to_json(),
                    "c_bounds": serde_json::to_value(&s.c_bounds).expect("bounds serialize"),
                    "obligation": serde_json::to_value(&s.obligation).expect("obligation serializes"),
                })
            })
            .collect();
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "group": self.group.name(),
            "h": self.h.to_json(),
            "eps": self.eps,
            "padding": u64_json(self.padding),
            "k": u64_json(self.k),
            "n_max": u64_json(self.n_max),
            "mode": self.mode,
            "steps": steps,
        })
    }

    /// Decodes and validates.
    pub fn from_json(v: &Value) -> Result<Self, BuildError> {
        let field = |name: &str| {
            v.get(name).ok_or_else(|| BuildError::InvalidParams(format!("state is missing `{name}`")))
        };
        let version = field("schema_version")?
            .as_u64()
            .ok_or_else(|| BuildError::InvalidParams("schema_version is not an integer".into()))?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(BuildError::Schema(version as u32));
        }
        let group_name = field("group")?
            .as_str()
            .ok_or_else(|| BuildError::InvalidParams("group is not a string".into()))?;
        let group = GroupDescriptor::parse(group_name)?;
        let h = GroupElement::from_json(group, field("h")?)?;
        let eps = field("eps")?
            .as_f64()
            .ok_or_else(|| BuildError::InvalidParams("eps is not a number".into()))?;
        let padding = u64_from_json(field("padding")?)?;
        let k = u64_from_json(field("k")?)?;
        let n_max = u64_from_json(field("n_max")?)?;
        let mode: OracleMode = serde_json::from_value(field("mode")?.clone())?;
        let raw_steps = field("steps")?
            .as_array()
            .ok_or_else(|| BuildError::InvalidParams("steps is not an array".into()))?;
        let mut steps = Vec::with_capacity(raw_steps.len());
        for (i, s) in raw_steps.iter().enumerate() {
            let n = padding + 1 + i as u64;
            let get = |name: &str| {
                s.get(name).ok_or_else(|| BuildError::Inconsistent { step: n, reason: format!("missing `{name}`") })
            };
            if u64_from_json(get("n")?)? != n {
                return Err(BuildError::Inconsistent { step: n, reason: "steps out of order".into() });
            }
            steps.push(Step {
                n,
                a: GroupElement::from_json(group, get("a")?)?,
                g: GroupElement::from_json(group, get("g")?)?,
                c_bounds: serde_json::from_value(get("c_bounds")?.clone())?,
                obligation: serde_json::from_value(get("obligation")?.clone())?,
            });
        }
        let state = ConstructionState { group, h, eps, padding, k, n_max, mode, steps };
        state.validate()?;
        Ok(state)
    }
}

fn u64_json(x: u64) -> Value {
    bigint_to_json(&BigInt::from(x))
}

fn u64_from_json(v: &Value) -> Result<u64, BuildError> {
    let x = bigint_from_json(v)?;
    u64::try_from(&x).map_err(|_| BuildError::InvalidParams(format!("{x} is not an unsigned 64-bit integer")))
}
