//! Switching and super-switching elements.
//!
//! `g` is switching for a finite symmetric `X` when `X ∩ g X g^{-1} ⊆ {e}`,
//! and super-switching when the same holds for all four patterns
//! `g X g`, `g X g^{-1}`, `g^{-1} X g`, `g^{-1} X g^{-1}`.
//!
//! Two oracles produce the element `g_{n+1}` of each construction step:
//!
//! * [`find_super_switching_exact`] scans the enumeration of the group and
//!   checks both obligations against explicitly enumerated sets. Only
//!   feasible while `(C_n)^{8n+1}` fits in memory.
//! * [`pick_super_switching_lamplighter`] reads off an element from the
//!   coordinate bounds of `C_n` alone.
//!
//! # Why the certificate works
//!
//! Let `R_t` bound `|t|` and `R_s` bound every lamp position over `C_n`, and
//! put `rho = (2n+1)(R_t + R_s)`. A product of `k` members of `C_n` has
//! `|t| <= k R_t` and lamps in `[-k(R_t+R_s), k(R_t+R_s)]`, so every
//! `x = (f, t)` in `X = (C_n)^{2n+1}` has `|t| <= rho` and lamps in
//! `[-rho, rho]`.
//!
//! Take `g = ({P}, T)` with `P > rho`, `T > 2 rho` and `T - P > rho`, so that
//! `g^{-1} = ({P - T}, -T)`.
//!
//! * `g x g` and `g^{-1} x g^{-1}` have shift `t ± 2T`, of absolute value
//!   above `3 rho`, so they leave `X`.
//! * `g x g^{-1} = ({P} xor (f + T) xor {P + t}, t)`. The lamps of `f + T`
//!   lie above `T - rho > P`. If `t != 0` the lamp `P > rho` stays lit; if
//!   `t = 0` and `x != e` then `f` is non-empty and every lamp sits above
//!   `T - rho > rho`. Either way the result leaves `X` unless `x = e`.
//! * `g^{-1} x g = ({P - T} xor (f - T) xor {P - T + t}, t)` is the mirror
//!   image: the lamp `P - T < -rho` stays lit when `t != 0`, and `f - T` lies
//!   below `-T + rho < -rho`.
//!
//! Non-membership in `(C_n)^{8n+1}` only needs `T > (8n+1) R_t`, since every
//! member of that ball has `|t| <= (8n+1) R_t`.
//!
//! The rule used is the smallest admissible choice in the order "`P` first":
//! `P = rho + 1` and `T = max((8n+1) R_t, 2 rho) + P + 1`.

use num_bigint::BigInt;
use num_traits::Signed;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{
    bigint_string, CoordBounds, Enumerator, GroupDescriptor, GroupElement, GroupError, SymmetricSet,
};

#[derive(Debug, Error)]
pub enum SwitchingError {
    #[error("no admissible super-switching element among the first {budget} enumerated elements")]
    SearchFailure { budget: u64 },
    #[error("certificate check `{0}` fails")]
    InvalidCertificate(String),
    #[error("coordinate certificates exist only for the lamplighter group, not {0}")]
    UnsupportedGroup(GroupDescriptor),
    #[error(transparent)]
    Group(#[from] GroupError),
}

pub fn is_switching(g: &GroupElement, x: &SymmetricSet) -> bool {
    let gi = g.invert();
    x.iter().all(|y| {
        let z = &(g * y) * &gi;
        z.is_identity() || !x.contains(&z)
    })
}

pub fn is_super_switching(g: &GroupElement, x: &SymmetricSet) -> bool {
    let gi = g.invert();
    let patterns = [(g, g), (g, &gi), (&gi, g), (&gi, &gi)];
    x.iter().all(|y| {
        patterns.iter().all(|(l, r)| {
            let z = &(*l * y) * *r;
            z.is_identity() || !x.contains(&z)
        })
    })
}

/// Brute-force check of: `g^{w1} x g^{w2} = y` with `x, y` in `X` forces
/// `x = y = e`. Deliberately independent of [`is_super_switching`].
pub fn sandwich_check(g: &GroupElement, x: &SymmetricSet) -> bool {
    let gi = g.invert();
    let powers = [g.clone(), gi];
    for a in x.iter() {
        for l in &powers {
            for r in &powers {
                let z = &(l * a) * r;
                for b in x.iter() {
                    if z == *b && !(a.is_identity() && b.is_identity()) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// First element in enumeration order that is super-switching for `x` and
/// outside `exclude`, scanning at most `budget` indices.
pub fn find_super_switching_exact(
    x: &SymmetricSet,
    exclude: &SymmetricSet,
    budget: u64,
) -> Result<GroupElement, SwitchingError> {
    find_super_switching_with(x, |g| exclude.contains(g), budget)
}

/// As [`find_super_switching_exact`], with exclusion given as a predicate.
pub fn find_super_switching_with(
    x: &SymmetricSet,
    excluded: impl Fn(&GroupElement) -> bool,
    budget: u64,
) -> Result<GroupElement, SwitchingError> {
    let Some(first) = x.iter().next() else {
        return Err(GroupError::Decode { what: "switching target", reason: "empty set".into() }.into());
    };
    let mut en = Enumerator::new(first.descriptor());
    for i in 1..=budget {
        let g = en.get(i);
        if is_super_switching(g, x) && !excluded(g) {
            return Ok(g.clone());
        }
    }
    Err(SwitchingError::SearchFailure { budget })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub holds: bool,
}

/// The coordinates of a certificate-picked lamplighter element `({P}, T)`
/// together with the inequalities that make it admissible for step `n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchingCertificate {
    #[serde(with = "u64_string")]
    pub n: u64,
    #[serde(with = "bigint_string")]
    pub r_t: BigInt,
    #[serde(with = "bigint_string")]
    pub r_s: BigInt,
    #[serde(with = "bigint_string")]
    pub rho: BigInt,
    #[serde(with = "bigint_string")]
    pub lamp: BigInt,
    #[serde(with = "bigint_string")]
    pub shift: BigInt,
    pub checks: Vec<CheckRecord>,
}

fn certificate_checks(n: u64, r_t: &BigInt, rho: &BigInt, p: &BigInt, t: &BigInt) -> Vec<CheckRecord> {
    let ball = BigInt::from(8 * n + 1) * r_t;
    let record = |name: &str, holds: bool| CheckRecord { name: name.into(), holds };
    vec![
        record("T > (8n+1) R_t", *t > ball),
        record("T > 2 rho", *t > BigInt::from(2) * rho),
        record("P > rho", p > rho),
        record("|P - T| > rho", (p - t).abs() > *rho),
    ]
}

impl SwitchingCertificate {
    pub fn element(&self) -> GroupElement {
        GroupElement::lamplighter([self.lamp.clone()], self.shift.clone())
    }

    /// Recomputes `rho` and every inequality from the stored coordinates.
    pub fn revalidate(&self) -> Result<(), SwitchingError> {
        let rho = BigInt::from(2 * self.n + 1) * (&self.r_t + &self.r_s);
        if rho != self.rho {
            return Err(SwitchingError::InvalidCertificate("rho = (2n+1)(R_t+R_s)".into()));
        }
        let fresh = certificate_checks(self.n, &self.r_t, &self.rho, &self.lamp, &self.shift);
        if fresh.len() != self.checks.len() {
            return Err(SwitchingError::InvalidCertificate("recorded check list".into()));
        }
        for (f, stored) in fresh.iter().zip(&self.checks) {
            if !f.holds || f != stored {
                return Err(SwitchingError::InvalidCertificate(f.name.clone()));
            }
        }
        Ok(())
    }
}

/// The certificate pick for `g_{n+1}` given bounds of `C_n`.
pub fn pick_super_switching_lamplighter(
    n: u64,
    bounds: &CoordBounds,
) -> (GroupElement, SwitchingCertificate) {
    let r_t = bounds.shift.clone();
    let r_s = bounds.spread.clone();
    let rho = BigInt::from(2 * n + 1) * (&r_t + &r_s);
    let lamp = &rho + 1;
    let ball = BigInt::from(8 * n + 1) * &r_t;
    let shift = ball.max(BigInt::from(2) * &rho) + &lamp + 1;
    let checks = certificate_checks(n, &r_t, &rho, &lamp, &shift);
    let cert = SwitchingCertificate { n, r_t, r_s, rho, lamp, shift, checks };
    (cert.element(), cert)
}

/// Escape element for the non-ICC controls: only non-membership in
/// `(C_n)^{8n+1}` is discharged, by pushing the primary coordinate past
/// `(8n+1) R_shift`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscapeCertificate {
    #[serde(with = "u64_string")]
    pub n: u64,
    #[serde(with = "bigint_string")]
    pub r_shift: BigInt,
    #[serde(with = "bigint_string")]
    pub primary: BigInt,
}

impl EscapeCertificate {
    pub fn holds(&self) -> bool {
        self.primary > BigInt::from(8 * self.n + 1) * &self.r_shift
    }
}

pub fn pick_escape_element(
    desc: GroupDescriptor,
    n: u64,
    bounds: &CoordBounds,
) -> (GroupElement, EscapeCertificate) {
    let primary: BigInt = BigInt::from(8 * n + 1) * &bounds.shift + 1;
    let cert = EscapeCertificate { n, r_shift: bounds.shift.clone(), primary: primary.clone() };
    (desc.along_primary(primary), cert)
}

pub(crate) mod u64_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(x)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| D::Error::custom(format!("`{s}` is not an unsigned integer")))
    }
}
