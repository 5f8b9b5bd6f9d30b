//! The distribution `p(n) = c n^{-5/4}` on the positive integers.
//!
//! `1/c = zeta(5/4)` is computed as a compensated suffix sum over `n <= D`
//! (the cache depth) plus an Euler-Maclaurin expansion of the remaining tail,
//! and the result is intersected with the integral enclosure
//! `4 (D+1)^{-1/4} <= sum_{n > D} n^{-5/4} <= 4 D^{-1/4}`.
//!
//! Sampling inverts the survival function `S(n) = P(s >= n)`: a cached table
//! for `n <= D + 1` (guide table plus binary search) and Newton's method on
//! the analytic tail beyond. Draws saturate at `u64::MAX`, an event of
//! probability about `1.3e-5`.

mod calibrate;
mod trajectory;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::KahanSum;

pub use calibrate::{
    calibrate_kn, estimate_e_mass, record_rates, Calibration, CalibrationFailure, PropertyFailures,
    RateRow, SweepRow,
};
pub use trajectory::{is_in_e, TrajectoryStats};

/// The exponent `s` in `n^{-s}`.
pub const EXPONENT: f64 = 1.25;
pub const DEFAULT_DEPTH: u64 = 1 << 20;
const GUIDE_BUCKETS: usize = 4096;
const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeavyTailError {
    #[error("the support starts at 1, got {0}")]
    OutOfSupport(u64),
    #[error("invalid event parameters: {0}")]
    InvalidParams(String),
    #[error("cache depth must be at least 16, got {0}")]
    DepthTooSmall(u64),
    #[error("requested tolerance {tol:e} is below the attainable error {err:e}")]
    ToleranceTooTight { tol: f64, err: f64 },
    #[error("{0}")]
    Calibration(Box<CalibrationFailure>),
}

/// Closed interval of reals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Intersection; falls back to `self` if the two are disjoint.
    pub fn intersect(&self, other: &Interval) -> Interval {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Interval { lo, hi }
        } else {
            *self
        }
    }
}

/// Euler-Maclaurin value of `sum_{n >= a} n^{-s}` and a bound on its error.
fn zeta_tail(a: f64) -> (f64, f64) {
    let s = EXPONENT;
    let q3 = s * (s + 1.0) * (s + 2.0);
    let q5 = q3 * (s + 3.0) * (s + 4.0);
    let q7 = q5 * (s + 5.0) * (s + 6.0);
    let v = a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s) + s / 12.0 * a.powf(-s - 1.0)
        - q3 / 720.0 * a.powf(-s - 3.0)
        + q5 / 30240.0 * a.powf(-s - 5.0);
    let err = q7 / 1_209_600.0 * a.powf(-s - 7.0) + 8.0 * UNIT_ROUNDOFF * v;
    (v, err)
}

/// Euler-Maclaurin value of `sum_{n >= a} n^{-s} ln n` and an error bound.
fn log_tail(a: f64) -> (f64, f64) {
    let s = EXPONENT;
    let la = a.ln();
    let q3 = s * (s + 1.0) * (s + 2.0);
    let dq3 = 3.0 * s * s + 6.0 * s + 2.0;
    let v = a.powf(1.0 - s) * (la / (s - 1.0) + 1.0 / ((s - 1.0) * (s - 1.0)))
        + 0.5 * a.powf(-s) * la
        + a.powf(-s - 1.0) * (s * la - 1.0) / 12.0
        + (dq3 - q3 * la) / 720.0 * a.powf(-s - 3.0);
    // the next correction, with its logarithm, dominates the remainder
    let q5 = q3 * (s + 3.0) * (s + 4.0);
    let err = q5 * (la + 1.0) / 30240.0 * a.powf(-s - 5.0) + 8.0 * UNIT_ROUNDOFF * v;
    (v, err)
}

#[derive(Clone, Debug)]
pub struct HeavyTailDist {
    depth: u64,
    zeta: Interval,
    c: f64,
    c_bounds: Interval,
    /// `suffix[n] = sum_{m >= n} m^{-s}` for `1 <= n <= depth + 1`.
    suffix: Vec<f64>,
    suffix_err: Vec<f64>,
    /// `surv[n] = P(s >= n)`, with `surv[0] = surv[1] = 1`.
    surv: Vec<f64>,
    guide: Vec<usize>,
    log_partial: f64,
}

impl HeavyTailDist {
    pub fn new(depth: u64) -> Result<Self, HeavyTailError> {
        if depth < 16 {
            return Err(HeavyTailError::DepthTooSmall(depth));
        }
        let d = depth as usize;
        let s = EXPONENT;
        let (tail, tail_err) = zeta_tail((depth + 1) as f64);
        let mut suffix = vec![0.0; d + 2];
        let mut suffix_err = vec![0.0; d + 2];
        suffix[d + 1] = tail;
        suffix_err[d + 1] = tail_err;
        let mut acc = KahanSum::default();
        acc.add(tail);
        let mut log_acc = KahanSum::default();
        for n in (1..=d).rev() {
            let x = n as f64;
            let term = x.powf(-s);
            acc.add(term);
            log_acc.add(term * x.ln());
            suffix[n] = acc.value();
            suffix_err[n] = tail_err + 8.0 * UNIT_ROUNDOFF * suffix[n];
        }
        let partial = suffix[1] - tail;
        let em = Interval { lo: suffix[1] - suffix_err[1], hi: suffix[1] + suffix_err[1] };
        let integral = Interval {
            lo: partial + 4.0 * ((depth + 1) as f64).powf(-0.25),
            hi: partial + 4.0 * (depth as f64).powf(-0.25),
        };
        let zeta = em.intersect(&integral);
        let c = 1.0 / suffix[1];
        let c_bounds = Interval { lo: 1.0 / zeta.hi, hi: 1.0 / zeta.lo };
        let mut surv: Vec<f64> = suffix.iter().map(|z| c * z).collect();
        surv[0] = 1.0;
        surv[1] = 1.0;
        let guide = (0..=GUIDE_BUCKETS)
            .map(|j| {
                let level = j as f64 / GUIDE_BUCKETS as f64;
                surv[1..].partition_point(|&v| v >= level)
            })
            .collect();
        Ok(HeavyTailDist {
            depth,
            zeta,
            c,
            c_bounds,
            suffix,
            suffix_err,
            surv,
            guide,
            log_partial: log_acc.value(),
        })
    }

    pub fn depth(&self) -> u64 {
        self.depth
    }

    pub fn normalizer(&self) -> f64 {
        self.c
    }

    /// Enclosure of `c`.
    pub fn normalizer_bounds(&self) -> Interval {
        self.c_bounds
    }

    /// Enclosure of `zeta(5/4) = 1/c`.
    pub fn zeta(&self) -> Interval {
        self.zeta
    }

    pub fn pmf(&self, n: u64) -> Result<f64, HeavyTailError> {
        if n == 0 {
            return Err(HeavyTailError::OutOfSupport(0));
        }
        Ok(self.c * (n as f64).powf(-EXPONENT))
    }

    pub fn ln_pmf(&self, n: u64) -> Result<f64, HeavyTailError> {
        if n == 0 {
            return Err(HeavyTailError::OutOfSupport(0));
        }
        Ok(self.c.ln() - EXPONENT * (n as f64).ln())
    }

    /// Point value of `P(s >= n)`.
    pub fn survival(&self, n: u64) -> f64 {
        if n <= 1 {
            1.0
        } else if n <= self.depth + 1 {
            self.surv[n as usize]
        } else {
            (self.c * zeta_tail(n as f64).0).min(1.0)
        }
    }

    /// Enclosure of `P(s >= n)`.
    pub fn tail_mass(&self, n: u64) -> Result<Interval, HeavyTailError> {
        match n {
            0 => Err(HeavyTailError::OutOfSupport(0)),
            1 => Ok(Interval::point(1.0)),
            _ => {
                let z = if n <= self.depth + 1 {
                    let i = n as usize;
                    Interval { lo: self.suffix[i] - self.suffix_err[i], hi: self.suffix[i] + self.suffix_err[i] }
                } else {
                    let a = n as f64;
                    let (v, err) = zeta_tail(a);
                    Interval { lo: v - err, hi: v + err }
                        .intersect(&Interval { lo: 4.0 * a.powf(-0.25), hi: 4.0 * (a - 1.0).powf(-0.25) })
                };
                Ok(Interval {
                    lo: self.c_bounds.lo * z.lo,
                    hi: (self.c_bounds.hi * z.hi).min(1.0),
                })
            }
        }
    }

    /// Largest `n` with `S(n) >= v`, for `v` in `(0, 1]`.
    fn invert_survival(&self, v: f64) -> u64 {
        let d = self.depth as usize;
        if v > self.surv[d + 1] {
            let j = ((v * GUIDE_BUCKETS as f64).ceil() as usize).clamp(1, GUIDE_BUCKETS) - 1;
            let (lo, hi) = (self.guide[j + 1], self.guide[j]);
            let slice = &self.surv[1 + lo..1 + hi];
            return (lo + slice.partition_point(|&x| x >= v)) as u64;
        }
        self.invert_tail(v)
    }

    fn invert_tail(&self, v: f64) -> u64 {
        let c = self.c;
        let floor = (self.depth + 1) as f64;
        let mut x = (4.0 * c / v).powi(4).max(floor);
        for _ in 0..6 {
            if !x.is_finite() || x >= u64::MAX as f64 {
                return u64::MAX;
            }
            let f = c * zeta_tail(x).0 - v;
            let step = f / (c * x.powf(-EXPONENT));
            x = (x + step).max(floor);
            if step.abs() < 0.5 {
                break;
            }
        }
        if x >= u64::MAX as f64 {
            return u64::MAX;
        }
        let mut n = x.floor() as u64;
        if x < (1u64 << 53) as f64 {
            while self.survival(n + 1) >= v {
                n += 1;
            }
            while n > self.depth + 1 && self.survival(n) < v {
                n -= 1;
            }
        }
        n.max(self.depth + 1)
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> u64 {
        let v = ((rng.next_u64() >> 11) + 1) as f64 * f64::powi(2.0, -53);
        self.invert_survival(v)
    }

    /// Draw from `p` conditioned on `s <= cap`.
    pub fn sample_at_most<R: RngCore + ?Sized>(&self, cap: u64, rng: &mut R) -> Result<u64, HeavyTailError> {
        if cap == 0 {
            return Err(HeavyTailError::OutOfSupport(0));
        }
        let u = (rng.next_u64() >> 11) as f64 * f64::powi(2.0, -53);
        let v = 1.0 - u * (1.0 - self.survival(cap.saturating_add(1)));
        Ok(self.invert_survival(v.min(1.0)).min(cap))
    }

    /// `sum_{n <= cap} n^{-s}` and `sum_{n <= cap} n^{-s} ln n`.
    fn partial_sums(&self, cap: u64) -> (f64, f64) {
        if cap <= self.depth {
            let mut z = KahanSum::default();
            let mut l = KahanSum::default();
            for n in (1..=cap).rev() {
                let x = n as f64;
                let t = x.powf(-EXPONENT);
                z.add(t);
                l.add(t * x.ln());
            }
            (z.value(), l.value())
        } else {
            let a = (cap + 1) as f64;
            let zt = zeta_tail(a).0;
            let lt = log_tail(a).0;
            (self.suffix[1] - zt, self.full_log_sum().0 - lt)
        }
    }

    fn full_log_sum(&self) -> (f64, f64) {
        let (lt, err) = log_tail((self.depth + 1) as f64);
        (self.log_partial + lt, err + 8.0 * UNIT_ROUNDOFF * self.log_partial)
    }

    /// Shannon entropy in nats together with a bound on the truncation and
    /// rounding error.
    pub fn entropy_with_error(&self) -> (f64, f64) {
        let (l, l_err) = self.full_log_sum();
        let z = self.suffix[1];
        let h = z.ln() + EXPONENT * l / z;
        let z_err = self.suffix_err[1];
        let err = EXPONENT * l_err / z + (1.0 / z + EXPONENT * l / (z * z)) * z_err + 8.0 * UNIT_ROUNDOFF * h;
        (h, err)
    }

    pub fn entropy(&self, tol: f64) -> Result<f64, HeavyTailError> {
        let (h, err) = self.entropy_with_error();
        if err > tol {
            return Err(HeavyTailError::ToleranceTooTight { tol, err });
        }
        Ok(h)
    }

    /// Entropy of `p` conditioned on `s <= cap`.
    pub fn entropy_at_most(&self, cap: u64) -> Result<f64, HeavyTailError> {
        if cap == 0 {
            return Err(HeavyTailError::OutOfSupport(0));
        }
        let (z, l) = self.partial_sums(cap);
        Ok((z.ln() + EXPONENT * l / z).max(0.0))
    }
}

/// Parameters `(eps, K, N, m)` of the typical-sequence event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaParams {
    pub eps: f64,
    pub k: u64,
    #[serde(with = "crate::group::safe_u64")]
    pub n: u64,
    pub m: u64,
}

impl LemmaParams {
    pub fn new(eps: f64, k: u64, n: u64, m: u64) -> Result<Self, HeavyTailError> {
        let p = LemmaParams { eps, k, n, m };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), HeavyTailError> {
        if !(self.eps > 0.0 && self.eps < 0.125) {
            return Err(HeavyTailError::InvalidParams(format!("eps = {} is outside (0, 1/8)", self.eps)));
        }
        if self.k == 0 || self.n == 0 {
            return Err(HeavyTailError::InvalidParams("K and N must be at least 1".into()));
        }
        if self.k > self.m {
            return Err(HeavyTailError::InvalidParams(format!("K = {} exceeds m = {}", self.k, self.m)));
        }
        Ok(())
    }
}
