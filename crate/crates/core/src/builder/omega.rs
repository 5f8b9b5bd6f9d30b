//! Words `(s, w)` with `s_i ~ p` and `w_i ~ nu_{s_i}`, and their images
//! `r(s, w) = f_{s_1}(w_1) ... f_{s_m}(w_m)`.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_traits::Zero;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{BuildError, ConstructionState};
use crate::group::{GroupDescriptor, GroupElement};
use crate::heavytail::{is_in_e, HeavyTailDist, HeavyTailError, LemmaParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    Untruncated,
    /// Every `s_i` drawn from `p` conditioned on `s_i <= cap`.
    AtMost(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaSample {
    pub s: Vec<u64>,
    pub w: Vec<u8>,
    /// `sum ln p(s_i) + sum ln nu_{s_i}(w_i)` under the unconditioned law.
    pub log_prob: f64,
    /// `m ln P(s <= cap)` for conditioned draws, zero otherwise. The
    /// conditioned log-probability is `log_prob - log_conditioning`.
    pub log_conditioning: f64,
    pub sampling: Sampling,
}

impl OmegaSample {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

fn check_atom(j: u8) -> Result<(), BuildError> {
    if (1..=4).contains(&j) {
        Ok(())
    } else {
        Err(BuildError::InvalidParams(format!("atom index {j} outside 1..=4")))
    }
}

fn small_weight(eps: f64, n: u64) -> f64 {
    eps * (-(n as f64)).exp2()
}

/// `nu_n(j)`.
pub fn nu_weight(eps: f64, n: u64, j: u8) -> Result<f64, BuildError> {
    check_atom(j)?;
    let a = small_weight(eps, n);
    Ok(if j <= 2 { a / 2.0 } else { (1.0 - a) / 2.0 })
}

/// `ln nu_n(j)`, accurate even when `eps 2^{-n}` underflows.
pub fn ln_nu_weight(eps: f64, n: u64, j: u8) -> Result<f64, BuildError> {
    check_atom(j)?;
    let ln2 = std::f64::consts::LN_2;
    Ok(if j <= 2 { eps.ln() - (n as f64 + 1.0) * ln2 } else { (-small_weight(eps, n)).ln_1p() - ln2 })
}

fn unit(rng: &mut (impl RngCore + ?Sized)) -> f64 {
    (rng.next_u64() >> 11) as f64 * f64::powi(2.0, -53)
}

fn draw_atom(eps: f64, n: u64, rng: &mut (impl RngCore + ?Sized)) -> u8 {
    let a = small_weight(eps, n);
    let u = unit(rng);
    if u < a / 2.0 {
        1
    } else if u < a {
        2
    } else if u < a + (1.0 - a) / 2.0 {
        3
    } else {
        4
    }
}

pub fn sample_omega<R: RngCore + ?Sized>(
    dist: &HeavyTailDist,
    eps: f64,
    m: usize,
    sampling: Sampling,
    rng: &mut R,
) -> Result<OmegaSample, BuildError> {
    if m == 0 {
        return Err(BuildError::InvalidParams("words need length m >= 1".into()));
    }
    let mut s = Vec::with_capacity(m);
    let mut w = Vec::with_capacity(m);
    let mut log_prob = 0.0;
    for _ in 0..m {
        let n = match sampling {
            Sampling::Untruncated => dist.sample(rng),
            Sampling::AtMost(cap) => dist.sample_at_most(cap, rng)?,
        };
        let j = draw_atom(eps, n, rng);
        log_prob += dist.ln_pmf(n)? + ln_nu_weight(eps, n, j)?;
        s.push(n);
        w.push(j);
    }
    let log_conditioning = match sampling {
        Sampling::Untruncated => 0.0,
        Sampling::AtMost(cap) => m as f64 * (-dist.survival(cap.saturating_add(1))).ln_1p(),
    };
    Ok(OmegaSample { s, w, log_prob, log_conditioning, sampling })
}

/// The chain `i_1 < ... < i_l` (1-based): `i_1` is the first index with
/// `s_j > N`, and each later index is the next `j` with `s_j` at least the
/// previous record value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordChain {
    pub indices: Vec<usize>,
}

impl RecordChain {
    /// `l(s)`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn record_indices(s: &[u64], padding: u64) -> RecordChain {
    let mut indices = Vec::new();
    let mut threshold: Option<u64> = None;
    for (i, &x) in s.iter().enumerate() {
        let hit = match threshold {
            None => x > padding,
            Some(t) => x >= t,
        };
        if hit {
            indices.push(i + 1);
            threshold = Some(x);
        }
    }
    RecordChain { indices }
}

/// `s` in the typical event and `w_i` in `{3, 4}` at every record index.
pub fn in_omega_eps(sample: &OmegaSample, params: &LemmaParams) -> Result<bool, HeavyTailError> {
    if sample.s.len() != sample.w.len() {
        return Err(HeavyTailError::InvalidParams("s and w differ in length".into()));
    }
    if !is_in_e(&sample.s, params)? {
        return Ok(false);
    }
    Ok(record_indices(&sample.s, params.n).indices.iter().all(|&i| sample.w[i - 1] >= 3))
}

fn toggle(lit: &mut BTreeSet<BigInt>, p: BigInt) {
    if !lit.remove(&p) {
        lit.insert(p);
    }
}

impl ConstructionState {
    /// `r(s, w)`. Every `s_i` must be at most `n_max`.
    pub fn evaluate_word(&self, sample: &OmegaSample) -> Result<GroupElement, BuildError> {
        if sample.s.len() != sample.w.len() {
            return Err(BuildError::InvalidParams("s and w differ in length".into()));
        }
        if let Some(&n) = sample.s.iter().find(|&&n| n > self.n_max() || n == 0) {
            return Err(if n == 0 {
                BuildError::InvalidParams("s_i = 0 is outside the support".into())
            } else {
                BuildError::Truncation { n, n_max: self.n_max() }
            });
        }
        if self.group() != GroupDescriptor::Lamplighter {
            let mut acc = self.group().identity();
            for (&n, &j) in sample.s.iter().zip(&sample.w) {
                acc = &acc * &self.step_atom(n, j)?;
            }
            return Ok(acc);
        }
        // toggle lamps in place; inverses (f - T, -T) are applied without
        // materializing them
        let mut lit = BTreeSet::new();
        let mut t = BigInt::zero();
        for (&n, &j) in sample.s.iter().zip(&sample.w) {
            check_atom(j)?;
            let Some(step) = self.step(n)? else { continue };
            let atom = if j <= 2 { &step.a } else { &step.g };
            let l = atom.as_lamps().expect("lamplighter state holds lamplighter atoms");
            if j % 2 == 1 {
                for p in l.lamps() {
                    toggle(&mut lit, p + &t);
                }
                t += l.shift();
            } else {
                t -= l.shift();
                for p in l.lamps() {
                    toggle(&mut lit, p + &t);
                }
            }
        }
        Ok(GroupElement::lamplighter(lit, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build, BuildOptions, OracleMode};
    use crate::rng::{stage, SeedTree};

    fn dist() -> HeavyTailDist {
        HeavyTailDist::new(1 << 14).unwrap()
    }

    fn sample(s: &[u64], w: &[u8]) -> OmegaSample {
        OmegaSample {
            s: s.to_vec(),
            w: w.to_vec(),
            log_prob: 0.0,
            log_conditioning: 0.0,
            sampling: Sampling::Untruncated,
        }
    }

    #[test]
    fn record_chain_cases() {
        assert!(record_indices(&[1, 1, 1, 1], 5).is_empty());
        assert_eq!(record_indices(&[1, 7, 6, 9], 5).indices, vec![2, 4]);
        assert_eq!(record_indices(&[1, 7, 7, 3], 5).indices, vec![2, 3]);
    }

    #[test]
    fn omega_membership_cases() {
        let p = LemmaParams { eps: 0.05, k: 2, n: 5, m: 4 };
        let s = [1, 5, 9, 17];
        assert!(in_omega_eps(&sample(&s, &[3, 3, 3, 3]), &p).unwrap());
        assert!(in_omega_eps(&sample(&s, &[1, 2, 4, 3]), &p).unwrap());
        assert!(!in_omega_eps(&sample(&s, &[3, 3, 3, 1]), &p).unwrap());
        assert!(!in_omega_eps(&sample(&[1, 5, 9, 9], &[3, 3, 3, 3]), &p).unwrap());
    }

    #[test]
    fn log_prob_recomputes_and_is_reproducible() {
        let d = dist();
        let tree = SeedTree::new(9);
        let x = sample_omega(&d, 0.05, 16, Sampling::Untruncated, &mut tree.stream(stage::MISC, 0)).unwrap();
        let y = sample_omega(&d, 0.05, 16, Sampling::Untruncated, &mut tree.stream(stage::MISC, 0)).unwrap();
        assert_eq!(x, y);
        let direct: f64 = x
            .s
            .iter()
            .zip(&x.w)
            .map(|(&n, &j)| (d.pmf(n).unwrap() * nu_weight(0.05, n, j).unwrap()).ln())
            .sum();
        assert!((x.log_prob - direct).abs() < 1e-9 * direct.abs().max(1.0));
        let c = sample_omega(&d, 0.05, 16, Sampling::AtMost(10), &mut tree.stream(stage::MISC, 1)).unwrap();
        assert!(c.s.iter().all(|&n| n <= 10));
        assert!(c.log_conditioning < 0.0);
    }

    #[test]
    fn ln_weights_survive_underflow() {
        let v = ln_nu_weight(0.05, 5000, 1).unwrap();
        assert!((v - (0.05f64.ln() - 5001.0 * std::f64::consts::LN_2)).abs() < 1e-9);
        assert_eq!(ln_nu_weight(0.05, 5000, 3).unwrap(), -std::f64::consts::LN_2);
    }

    #[test]
    fn words_match_generic_product() {
        let state = build(&BuildOptions::new(GroupDescriptor::Lamplighter, 0.05, 2, 2, 7, OracleMode::Certificate))
            .unwrap();
        let tree = SeedTree::new(3);
        for i in 0..200 {
            let x = sample_omega(&dist(), 0.05, 6, Sampling::AtMost(7), &mut tree.stream(stage::MISC, i)).unwrap();
            let atoms: Vec<GroupElement> =
                x.s.iter().zip(&x.w).map(|(&n, &j)| state.step_atom(n, j).unwrap()).collect();
            let folded = atoms.iter().fold(GroupDescriptor::Lamplighter.identity(), |a, b| &a * b);
            assert_eq!(state.evaluate_word(&x).unwrap(), folded);
        }
        let one = sample(&[5], &[4]);
        assert_eq!(state.evaluate_word(&one).unwrap(), state.step_atom(5, 4).unwrap());
        assert!(state.evaluate_word(&sample(&[1, 2, 1], &[1, 3, 4])).unwrap().is_identity());
        assert!(matches!(state.evaluate_word(&sample(&[8], &[3])), Err(BuildError::Truncation { .. })));
    }
}
