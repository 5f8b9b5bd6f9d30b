//! Checks on the event `Omega_eps`: pairwise separation of `h r(alpha)` from
//! `r(beta)`, the mass of the event, and the lower bound it implies.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::omega::{in_omega_eps, nu_weight, sample_omega, OmegaSample, Sampling};
use super::{BuildError, ConstructionState};
use crate::conv::SparseMeasure;
use crate::group::GroupElement;
use crate::heavytail::{HeavyTailDist, LemmaParams};
use crate::rng::{stage, SeedTree};
use crate::stats::Proportion;

/// Below this acceptance rate the claim sampler gives up.
pub const MIN_ACCEPTANCE: f64 = 1e-3;
/// Draws made before starvation is judged.
const STARVATION_WINDOW: u64 = 100_000;

#[derive(Clone, Debug)]
pub struct ClaimOptions {
    pub m: u64,
    /// Number of pairs `(alpha, beta)`; the pool holds `2 * pairs` words.
    pub pairs: u64,
    pub seed: u64,
    /// Replaces `h`; `Some(e)` is the sanity inversion.
    pub h_override: Option<GroupElement>,
    pub batch: u64,
}

impl ClaimOptions {
    pub fn new(m: u64, pairs: u64, seed: u64) -> Self {
        ClaimOptions { m, pairs, seed, h_override: None, batch: 4096 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub m: u64,
    pub h: Value,
    pub pairs: u64,
    pub pool: u64,
    pub attempts: u64,
    pub acceptance: Proportion,
    /// `P(s <= n_max)^m`, the probability of the conditioning on truncation.
    pub conditioning_probability: f64,
    /// Every ordered pair of pool words, including `alpha = beta`.
    pub pairs_compared: u64,
    pub equalities: u64,
    pub self_equalities: u64,
    pub digest_collisions: u64,
    pub non_identity_fraction: f64,
}

impl ClaimReport {
    pub fn holds(&self) -> bool {
        self.equalities == 0
    }
}

fn digest(g: &GroupElement) -> u128 {
    let half = |salt: u8| {
        let mut h = DefaultHasher::new();
        salt.hash(&mut h);
        g.hash(&mut h);
        h.finish()
    };
    (u128::from(half(0)) << 64) | u128::from(half(1))
}

impl ConstructionState {
    pub fn params(&self, m: u64) -> LemmaParams {
        LemmaParams { eps: self.eps(), k: self.k(), n: self.padding(), m }
    }
}

/// Samples `2 * pairs` words from `eta` conditioned on `Omega_eps` and on
/// `s_i <= n_max`, then compares `h r(alpha)` with `r(beta)` over every
/// ordered pair. Words are compared through 128-bit digests and every digest
/// match is confirmed by exact recomputation.
pub fn verify_claim(
    state: &ConstructionState,
    dist: &HeavyTailDist,
    opts: &ClaimOptions,
) -> Result<ClaimReport, BuildError> {
    let params = state.params(opts.m);
    if opts.m <= params.k.max(params.n) {
        return Err(BuildError::InvalidParams(format!(
            "m = {} must exceed max(K, N) = {}",
            opts.m,
            params.k.max(params.n)
        )));
    }
    if opts.pairs == 0 || opts.batch == 0 {
        return Err(BuildError::InvalidParams("pairs and batch must be positive".into()));
    }
    params.validate()?;
    let h = opts.h_override.clone().unwrap_or_else(|| state.h().clone());
    let target = 2 * opts.pairs as usize;
    let sampling = Sampling::AtMost(state.n_max());
    let tree = SeedTree::new(opts.seed);
    let m = opts.m as usize;

    let mut pool: Vec<OmegaSample> = Vec::with_capacity(target);
    let mut accepted = 0u64;
    let mut attempts = 0u64;
    while pool.len() < target {
        let batch: Vec<Option<OmegaSample>> = (attempts..attempts + opts.batch)
            .into_par_iter()
            .map(|i| {
                let x = sample_omega(dist, params.eps, m, sampling, &mut tree.stream(stage::CLAIM, i))?;
                Ok(in_omega_eps(&x, &params)?.then_some(x))
            })
            .collect::<Result<_, BuildError>>()?;
        attempts += opts.batch;
        for x in batch.into_iter().flatten() {
            accepted += 1;
            if pool.len() < target {
                pool.push(x);
            }
        }
        if attempts >= STARVATION_WINDOW && (accepted as f64) < MIN_ACCEPTANCE * attempts as f64 {
            return Err(BuildError::Starved { accepted, attempts });
        }
    }

    let image = |x: &OmegaSample| -> Result<(GroupElement, GroupElement), BuildError> {
        let r = state.evaluate_word(x)?;
        let hr = h.compose(&r)?;
        Ok((r, hr))
    };
    let digests: Vec<(u128, u128, bool)> = pool
        .par_iter()
        .map(|x| {
            let (r, hr) = image(x)?;
            Ok((digest(&r), digest(&hr), !r.is_identity()))
        })
        .collect::<Result<_, BuildError>>()?;

    let mut by_word: HashMap<u128, Vec<usize>> = HashMap::new();
    for (j, d) in digests.iter().enumerate() {
        by_word.entry(d.0).or_default().push(j);
    }
    let candidates: Vec<(usize, usize)> = digests
        .iter()
        .enumerate()
        .flat_map(|(i, d)| by_word.get(&d.1).into_iter().flatten().map(move |&j| (i, j)))
        .collect();
    let mut equalities = 0;
    let mut self_equalities = 0;
    let mut digest_collisions = 0;
    for (i, j) in candidates {
        let (_, hr) = image(&pool[i])?;
        let (r, _) = image(&pool[j])?;
        if hr == r {
            equalities += 1;
            if i == j {
                self_equalities += 1;
            }
        } else {
            digest_collisions += 1;
        }
    }

    let non_identity = digests.iter().filter(|d| d.2).count();
    Ok(ClaimReport {
        m: opts.m,
        h: h.to_json(),
        pairs: opts.pairs,
        pool: target as u64,
        attempts,
        acceptance: Proportion::new(accepted, attempts),
        conditioning_probability: (1.0 - dist.survival(state.n_max().saturating_add(1))).powi(m as i32),
        pairs_compared: (target as u64) * (target as u64),
        equalities,
        self_equalities,
        digest_collisions,
        non_identity_fraction: non_identity as f64 / target as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaMass {
    pub params: LemmaParams,
    pub sampling: Sampling,
    pub mass: Proportion,
    /// `(1 - eps)^2`.
    pub product_floor: f64,
    /// The estimate is at least `1 - 2 eps` up to its `3 sigma` half-width.
    pub above_floor: bool,
}

/// Monte Carlo estimate of `eta(Omega_eps)`.
pub fn omega_mass(
    dist: &HeavyTailDist,
    params: &LemmaParams,
    samples: u64,
    seed: u64,
    sampling: Sampling,
) -> Result<OmegaMass, BuildError> {
    params.validate()?;
    if samples == 0 {
        return Err(BuildError::InvalidParams("need at least one sample".into()));
    }
    let tree = SeedTree::new(seed);
    let m = params.m as usize;
    let hits = (0..samples)
        .into_par_iter()
        .map(|i| {
            let x = sample_omega(dist, params.eps, m, sampling, &mut tree.stream(stage::OMEGA, i))?;
            Ok(u64::from(in_omega_eps(&x, params)?))
        })
        .try_reduce(|| 0, |a, b| Ok::<_, BuildError>(a + b))?;
    let mass = Proportion::new(hits, samples);
    Ok(OmegaMass {
        params: *params,
        sampling,
        mass,
        product_floor: (1.0 - params.eps).powi(2),
        above_floor: mass.estimate + mass.ci >= 1.0 - 2.0 * params.eps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventBound {
    pub m: u64,
    pub omega: OmegaMass,
    /// `4 eta(Omega_eps) - 2`, a lower bound on `||h mu^{*m} - mu^{*m}||`
    /// whenever the separation claim holds.
    pub estimate: f64,
    pub ci: f64,
    /// `2 - 8 eps`.
    pub floor: f64,
}

/// Uses untruncated sampling; only `m >= K` is required here. The step
/// elements never enter, so `params` may come from a state
/// ([`ConstructionState::params`]) or straight from a calibration.
pub fn event_tv_bound(
    dist: &HeavyTailDist,
    params: &LemmaParams,
    samples: u64,
    seed: u64,
) -> Result<EventBound, BuildError> {
    let omega = omega_mass(dist, params, samples, seed, Sampling::Untruncated)?;
    let estimate = (4.0 * omega.mass.estimate - 2.0).min(2.0);
    Ok(EventBound { m: params.m, estimate, ci: 4.0 * omega.mass.ci, floor: 2.0 - 8.0 * params.eps, omega })
}

/// `r_* eta` restricted to `s_i <= n_max`, by listing every word. Indices
/// inside the padding are merged into one symbol since they all map to `e`.
pub fn pushforward_exact(state: &ConstructionState, dist: &HeavyTailDist, m: usize) -> Result<SparseMeasure, BuildError> {
    let mut symbols: Vec<(u64, u8, f64)> = vec![(1, 3, 1.0 - dist.survival(state.padding() + 1))];
    for n in state.padding() + 1..=state.n_max() {
        for j in 1..=4 {
            symbols.push((n, j, dist.pmf(n)? * nu_weight(state.eps(), n, j)?));
        }
    }
    let words = (symbols.len() as f64).powi(m as i32);
    if m == 0 || words > 5e6 {
        return Err(BuildError::InvalidParams(format!("{words} words is too many to list")));
    }
    let mut out = SparseMeasure::zero(state.group());
    let mut digits = vec![0usize; m];
    loop {
        let mut weight = 1.0;
        let mut x = OmegaSample {
            s: Vec::with_capacity(m),
            w: Vec::with_capacity(m),
            log_prob: 0.0,
            log_conditioning: 0.0,
            sampling: Sampling::AtMost(state.n_max()),
        };
        for &d in &digits {
            let (n, j, p) = symbols[d];
            x.s.push(n);
            x.w.push(j);
            weight *= p;
        }
        out.add(state.evaluate_word(&x)?, weight)?;
        let Some(pos) = digits.iter().rposition(|&d| d + 1 < symbols.len()) else { break };
        digits[pos] += 1;
        for d in &mut digits[pos + 1..] {
            *d = 0;
        }
    }
    Ok(out)
}
