//! Monte Carlo calibration of `(K, N)` and record-event rate estimators.
//!
//! For each sampled sequence of length `m` we keep the last index failing
//! `M_k >= k^2` and the last index at which the prefix maximum is repeated.
//! A sequence satisfies the last two properties of the typical event for a
//! given `K` exactly when both indices are below `K`, so the eligible count
//! as a function of `K` is a cumulative histogram. The sweep takes the
//! smallest `K` whose eligible fraction reaches `1 - eps + 3 sigma`, then the
//! smallest `N` (an order statistic of `M_K` over eligible sequences) keeping
//! that fraction.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{is_in_e, HeavyTailDist, HeavyTailError, LemmaParams};
use crate::rng::{stage, SeedTree};
use crate::stats::{binomial_sigma, KahanSum, Proportion, Z_SCORE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u64,
    pub eligible: u64,
    pub fraction: f64,
}

/// Sequences violating each property at the calibrated `(K, N)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyFailures {
    pub prefix_max_above_n: u64,
    pub max_below_square: u64,
    pub repeated_max: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub eps: f64,
    pub m: u64,
    pub samples: u64,
    pub k: u64,
    #[serde(with = "crate::group::safe_u64")]
    pub n: u64,
    pub target_fraction: f64,
    pub mass: Proportion,
    pub failures: PropertyFailures,
    /// Eligible fraction (ignoring the bound on `M_K`) for every `K`.
    pub sweep: Vec<SweepRow>,
    /// E-mass at the calibrated `K` for increasing `N`.
    #[serde(with = "crate::group::safe_u64_pairs")]
    pub n_curve: Vec<(u64, f64)>,
}

impl Calibration {
    pub fn params(&self) -> LemmaParams {
        LemmaParams { eps: self.eps, k: self.k, n: self.n, m: self.m }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFailure {
    pub eps: f64,
    pub m: u64,
    pub samples: u64,
    pub target_fraction: f64,
    pub best_k: u64,
    pub best_fraction: f64,
}

impl fmt::Display for CalibrationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "no K <= m = {} reaches eligible fraction {:.5} (best: K = {} with {:.5}, eps = {}, {} samples)",
            self.m, self.target_fraction, self.best_k, self.best_fraction, self.eps, self.samples
        )
    }
}

struct SequenceSummary {
    last_below_square: usize,
    last_repeated_max: usize,
    /// Strict increases of the running maximum as `(index, value)`.
    records: Vec<(usize, u64)>,
}

impl SequenceSummary {
    fn last_bad(&self) -> usize {
        self.last_below_square.max(self.last_repeated_max)
    }

    fn max_at(&self, k: usize) -> u64 {
        let i = self.records.partition_point(|&(pos, _)| pos <= k);
        self.records[i - 1].1
    }
}

fn summarize(d: &HeavyTailDist, m: usize, rng: &mut impl rand::RngCore) -> SequenceSummary {
    let mut best = 0u64;
    let mut count = 0usize;
    let mut summary = SequenceSummary { last_below_square: 0, last_repeated_max: 0, records: Vec::new() };
    for k in 1..=m {
        let x = d.sample(rng);
        if x > best {
            best = x;
            count = 1;
            summary.records.push((k, x));
        } else if x == best {
            count += 1;
        }
        if best < (k as u64).saturating_mul(k as u64) {
            summary.last_below_square = k;
        }
        if count > 1 {
            summary.last_repeated_max = k;
        }
    }
    summary
}

pub fn calibrate_kn(
    d: &HeavyTailDist,
    eps: f64,
    m: u64,
    samples: u64,
    seed: u64,
) -> Result<Calibration, HeavyTailError> {
    if !(eps > 0.0 && eps < 0.125) {
        return Err(HeavyTailError::InvalidParams(format!("eps = {eps} is outside (0, 1/8)")));
    }
    if m < 4 || samples == 0 {
        return Err(HeavyTailError::InvalidParams(format!("need m >= 4 and samples >= 1, got m = {m}, samples = {samples}")));
    }
    let tree = SeedTree::new(seed);
    let mu = m as usize;
    let summaries: Vec<SequenceSummary> = (0..samples)
        .into_par_iter()
        .map(|i| summarize(d, mu, &mut tree.stream(stage::CALIBRATION, i)))
        .collect();

    let mut hist = vec![0u64; mu + 1];
    for s in &summaries {
        hist[s.last_bad()] += 1;
    }
    let sigma = binomial_sigma(1.0 - eps, samples);
    let target_fraction = 1.0 - eps + Z_SCORE * sigma;
    let target = (target_fraction * samples as f64).ceil() as u64;

    let mut sweep = Vec::with_capacity(mu);
    let mut eligible = 0u64;
    let mut chosen = None;
    for k in 1..=mu {
        eligible += hist[k - 1];
        sweep.push(SweepRow { k: k as u64, eligible, fraction: eligible as f64 / samples as f64 });
        if chosen.is_none() && eligible >= target {
            chosen = Some(k);
        }
    }
    let Some(k) = chosen else {
        let best = sweep.iter().max_by(|a, b| a.fraction.total_cmp(&b.fraction)).expect("m >= 4");
        return Err(HeavyTailError::Calibration(Box::new(CalibrationFailure {
            eps,
            m,
            samples,
            target_fraction,
            best_k: best.k,
            best_fraction: best.fraction,
        })));
    };

    let mut maxima: Vec<u64> =
        summaries.iter().filter(|s| s.last_bad() < k).map(|s| s.max_at(k)).collect();
    maxima.sort_unstable();
    let n = maxima[target as usize - 1];
    let successes = maxima.partition_point(|&x| x <= n) as u64;
    let mass = Proportion::new(successes, samples);

    let mut n_curve: Vec<(u64, f64)> = [0.5, 0.75, 0.9, 0.99, 1.0]
        .iter()
        .map(|q| maxima[((q * maxima.len() as f64).ceil() as usize).clamp(1, maxima.len()) - 1])
        .chain([n])
        .map(|x| (x, maxima.partition_point(|&y| y <= x) as f64 / samples as f64))
        .collect();
    n_curve.sort_by_key(|&(x, _)| x);
    n_curve.dedup();

    let failures = PropertyFailures {
        prefix_max_above_n: summaries.iter().filter(|s| s.max_at(k) > n).count() as u64,
        max_below_square: summaries.iter().filter(|s| s.last_below_square >= k).count() as u64,
        repeated_max: summaries.iter().filter(|s| s.last_repeated_max >= k).count() as u64,
    };

    Ok(Calibration {
        eps,
        m,
        samples,
        k: k as u64,
        n,
        target_fraction,
        mass,
        failures,
        sweep,
        n_curve,
    })
}

/// Fraction of fresh sequences lying in the typical event, drawn from the
/// stream family `stage_id` so that holdout draws never reuse calibration
/// draws.
pub fn estimate_e_mass(
    d: &HeavyTailDist,
    params: &LemmaParams,
    samples: u64,
    seed: u64,
    stage_id: u64,
) -> Result<Proportion, HeavyTailError> {
    params.validate()?;
    let tree = SeedTree::new(seed);
    let m = params.m as usize;
    let hits = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree.stream(stage_id, i);
            let s: Vec<u64> = (0..m).map(|_| d.sample(&mut rng)).collect();
            is_in_e(&s, params).map(u64::from)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(Proportion::new(hits, samples))
}

/// Empirical frequency of `A_k = {M_k < k^2}` and mean of `1/M_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub k: u64,
    pub a_frequency: Proportion,
    /// `exp(-4 c sqrt(k))`.
    pub a_bound: f64,
    /// Binomial standard error evaluated at the bound.
    pub a_sigma: f64,
    pub a_within_bound: bool,
    pub inv_max_mean: f64,
    pub inv_max_se: f64,
    /// `exp(-4 c sqrt(k)) + 1/k^2`.
    pub inv_max_bound: f64,
    pub inv_max_within_bound: bool,
}

pub fn record_rates(d: &HeavyTailDist, ks: &[u64], samples: u64, seed: u64) -> Vec<RateRow> {
    let horizon = ks.iter().copied().max().unwrap_or(0) as usize;
    let tree = SeedTree::new(seed);
    let maxima: Vec<Vec<u64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree.stream(stage::RECORD_RATES, i);
            let mut best = 0;
            let mut at = Vec::with_capacity(ks.len());
            let mut prefix = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                best = best.max(d.sample(&mut rng));
                prefix.push(best);
            }
            for &k in ks {
                at.push(prefix[k as usize - 1]);
            }
            at
        })
        .collect();
    let c = d.normalizer();
    ks.iter()
        .enumerate()
        .map(|(j, &k)| {
            let kk = k as f64;
            let bound = (-4.0 * c * kk.sqrt()).exp();
            let hits = maxima.iter().filter(|row| row[j] < k * k).count() as u64;
            let freq = Proportion::new(hits, samples);
            let sigma = binomial_sigma(bound, samples);
            let mut sum = KahanSum::default();
            let mut sq = KahanSum::default();
            for row in &maxima {
                let v = 1.0 / row[j] as f64;
                sum.add(v);
                sq.add(v * v);
            }
            let n = samples as f64;
            let mean = sum.value() / n;
            let var = (sq.value() / n - mean * mean).max(0.0);
            let se = (var / n).sqrt();
            let inv_bound = bound + 1.0 / (kk * kk);
            RateRow {
                k,
                a_frequency: freq,
                a_bound: bound,
                a_sigma: sigma,
                a_within_bound: freq.estimate <= bound + Z_SCORE * sigma,
                inv_max_mean: mean,
                inv_max_se: se,
                inv_max_bound: inv_bound,
                inv_max_within_bound: mean <= inv_bound + Z_SCORE * se,
            }
        })
        .collect()
}
