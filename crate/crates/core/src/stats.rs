//! Binomial estimates with `3 sigma` half-widths.

use serde::{Deserialize, Serialize};

/// Number of standard deviations used for every confidence interval.
pub const Z_SCORE: f64 = 3.0;

/// A Monte Carlo proportion with its standard error and `3 sigma` half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub sigma: f64,
    pub ci: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(trials > 0, "proportion over zero trials");
        let p = successes as f64 / trials as f64;
        let sigma = binomial_sigma(p, trials);
        Proportion { successes, trials, estimate: p, sigma, ci: Z_SCORE * sigma }
    }
}

/// Standard error of a proportion `p` estimated from `n` trials.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Compensated (Kahan–Babuska) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        for x in iter {
            k.add(x);
        }
        k
    }
}
