//! Exact arithmetic on the concrete countable groups used as construction
//! targets and controls.
//!
//! Three families are supported:
//!
//! * the lamplighter group `Z/2 wr Z`, elements `(lamps, t)` where `lamps` is a
//!   finite set of lit positions and `t` the walker position, with product
//!   `(f, t)(f', t') = (f xor (f' + t), t + t')`;
//! * free abelian groups `Z^d` for `d` in `1..=3`;
//! * the integer Heisenberg group of 3x3 unitriangular matrices, written as
//!   triples `(a, b, c)` with `(a, b, c)(a', b', c') = (a + a', b + b', c + c' + a b')`.
//!
//! All coordinates are arbitrary precision. Elements are kept in canonical
//! form, so structural equality is group equality and the derived `Ord` is a
//! total order on the group (lamplighter: lamps lexicographically, then `t`).

mod enumerate;
mod json;
mod set;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::ops::Mul;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use enumerate::{conjugate_probe, enumerate_elements, Enumerator};
pub use json::{bigint_from_json, bigint_string, bigint_to_json, safe_u64, safe_u64_pairs};
pub use set::{product_ball, BallOracle, CoordBounds, SymmetricSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("operands belong to different groups ({left} vs {right})")]
    MixedOperands { left: GroupDescriptor, right: GroupDescriptor },
    #[error("set is not closed under inverses: missing inverse of {0}")]
    NotSymmetric(String),
    #[error("product ball exceeded budget of {budget} elements at word length {radius}")]
    BudgetExceeded { budget: usize, radius: usize },
    #[error("free abelian rank must be 1, 2 or 3, got {0}")]
    UnsupportedRank(usize),
    #[error("cannot decode {what}: {reason}")]
    Decode { what: &'static str, reason: String },
}

/// Which concrete group an element lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupDescriptor {
    Lamplighter,
    FreeAbelian { d: usize },
    Heisenberg,
}

impl GroupDescriptor {
    pub fn free_abelian(d: usize) -> Result<Self, GroupError> {
        if (1..=3).contains(&d) {
            Ok(GroupDescriptor::FreeAbelian { d })
        } else {
            Err(GroupError::UnsupportedRank(d))
        }
    }

    /// Every group here is amenable.
    pub fn is_amenable(&self) -> bool {
        true
    }

    /// Only the lamplighter group has infinite conjugacy classes; the others
    /// are controls.
    pub fn is_icc(&self) -> bool {
        matches!(self, GroupDescriptor::Lamplighter)
    }

    pub fn identity(&self) -> GroupElement {
        match *self {
            GroupDescriptor::Lamplighter => GroupElement::Lamplighter(LampConfig::identity()),
            GroupDescriptor::FreeAbelian { d } => GroupElement::FreeAbelian(vec![BigInt::zero(); d]),
            GroupDescriptor::Heisenberg => {
                GroupElement::Heisenberg([BigInt::zero(), BigInt::zero(), BigInt::zero()])
            }
        }
    }

    /// The standard symmetric generating set used for enumeration, without
    /// the identity. Lamplighter: the lamp at the origin and the two shifts.
    pub fn generators(&self) -> Vec<GroupElement> {
        let one = BigInt::from(1);
        match *self {
            GroupDescriptor::Lamplighter => vec![
                GroupElement::lamplighter([0i64], 0),
                GroupElement::lamplighter(std::iter::empty::<i64>(), 1),
                GroupElement::lamplighter(std::iter::empty::<i64>(), -1),
            ],
            GroupDescriptor::FreeAbelian { d } => {
                let mut gens = Vec::with_capacity(2 * d);
                for i in 0..d {
                    for sign in [1, -1] {
                        let mut v = vec![BigInt::zero(); d];
                        v[i] = BigInt::from(sign);
                        gens.push(GroupElement::FreeAbelian(v));
                    }
                }
                gens
            }
            GroupDescriptor::Heisenberg => {
                let z = BigInt::zero;
                vec![
                    GroupElement::Heisenberg([one.clone(), z(), z()]),
                    GroupElement::Heisenberg([-one.clone(), z(), z()]),
                    GroupElement::Heisenberg([z(), one.clone(), z()]),
                    GroupElement::Heisenberg([z(), -one, z()]),
                ]
            }
        }
    }

    /// Element whose primary coordinate (see [`GroupElement::primary`]) is
    /// `value` and every other coordinate is zero.
    pub fn along_primary(&self, value: BigInt) -> GroupElement {
        match *self {
            GroupDescriptor::Lamplighter => {
                GroupElement::Lamplighter(LampConfig { lamps: Vec::new(), t: value })
            }
            GroupDescriptor::FreeAbelian { d } => {
                let mut v = vec![BigInt::zero(); d];
                v[0] = value;
                GroupElement::FreeAbelian(v)
            }
            GroupDescriptor::Heisenberg => {
                GroupElement::Heisenberg([value, BigInt::zero(), BigInt::zero()])
            }
        }
    }

    /// Short name used on the command line.
    pub fn name(&self) -> String {
        match *self {
            GroupDescriptor::Lamplighter => "lamplighter".into(),
            GroupDescriptor::FreeAbelian { d: 1 } => "z".into(),
            GroupDescriptor::FreeAbelian { d } => format!("z{d}"),
            GroupDescriptor::Heisenberg => "heisenberg".into(),
        }
    }

    pub fn parse(name: &str) -> Result<Self, GroupError> {
        match name {
            "lamplighter" => Ok(GroupDescriptor::Lamplighter),
            "z" | "z1" => Self::free_abelian(1),
            "z2" => Self::free_abelian(2),
            "z3" => Self::free_abelian(3),
            "heisenberg" => Ok(GroupDescriptor::Heisenberg),
            other => Err(GroupError::Decode {
                what: "group name",
                reason: format!("unknown group `{other}`"),
            }),
        }
    }
}

impl fmt::Display for GroupDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Lamplighter element: strictly increasing lit positions and a shift.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LampConfig {
    lamps: Vec<BigInt>,
    t: BigInt,
}

impl LampConfig {
    pub fn identity() -> Self {
        LampConfig { lamps: Vec::new(), t: BigInt::zero() }
    }

    /// Builds a canonical configuration; repeated positions cancel in pairs.
    pub fn new(lamps: impl IntoIterator<Item = BigInt>, t: BigInt) -> Self {
        let mut lit = BTreeSet::new();
        for p in lamps {
            if !lit.remove(&p) {
                lit.insert(p);
            }
        }
        LampConfig { lamps: lit.into_iter().collect(), t }
    }

    pub fn lamps(&self) -> &[BigInt] {
        &self.lamps
    }

    pub fn shift(&self) -> &BigInt {
        &self.t
    }

    fn compose(&self, rhs: &LampConfig) -> LampConfig {
        // merge f with (f' + t), dropping positions that appear in both
        let shifted: Vec<BigInt> = rhs.lamps.iter().map(|p| p + &self.t).collect();
        let mut out = Vec::with_capacity(self.lamps.len() + shifted.len());
        let (mut i, mut j) = (0, 0);
        while i < self.lamps.len() && j < shifted.len() {
            match self.lamps[i].cmp(&shifted[j]) {
                Ordering::Less => {
                    out.push(self.lamps[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(shifted[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend(self.lamps[i..].iter().cloned());
        out.extend(shifted[j..].iter().cloned());
        LampConfig { lamps: out, t: &self.t + &rhs.t }
    }

    fn invert(&self) -> LampConfig {
        LampConfig {
            lamps: self.lamps.iter().map(|p| p - &self.t).collect(),
            t: -&self.t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupElement {
    Lamplighter(LampConfig),
    FreeAbelian(Vec<BigInt>),
    Heisenberg([BigInt; 3]),
}

impl GroupElement {
    pub fn lamplighter<I, P>(lamps: I, t: impl Into<BigInt>) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<BigInt>,
    {
        GroupElement::Lamplighter(LampConfig::new(lamps.into_iter().map(Into::into), t.into()))
    }

    pub fn free_abelian<P: Into<BigInt>>(coords: impl IntoIterator<Item = P>) -> Self {
        GroupElement::FreeAbelian(coords.into_iter().map(Into::into).collect())
    }

    pub fn heisenberg(a: impl Into<BigInt>, b: impl Into<BigInt>, c: impl Into<BigInt>) -> Self {
        GroupElement::Heisenberg([a.into(), b.into(), c.into()])
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        match self {
            GroupElement::Lamplighter(_) => GroupDescriptor::Lamplighter,
            GroupElement::FreeAbelian(v) => GroupDescriptor::FreeAbelian { d: v.len() },
            GroupElement::Heisenberg(_) => GroupDescriptor::Heisenberg,
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            GroupElement::Lamplighter(l) => l.lamps.is_empty() && l.t.is_zero(),
            GroupElement::FreeAbelian(v) => v.iter().all(Zero::is_zero),
            GroupElement::Heisenberg(h) => h.iter().all(Zero::is_zero),
        }
    }

    pub fn compose(&self, rhs: &GroupElement) -> Result<GroupElement, GroupError> {
        match (self, rhs) {
            (GroupElement::Lamplighter(a), GroupElement::Lamplighter(b)) => {
                Ok(GroupElement::Lamplighter(a.compose(b)))
            }
            (GroupElement::FreeAbelian(a), GroupElement::FreeAbelian(b)) if a.len() == b.len() => {
                Ok(GroupElement::FreeAbelian(a.iter().zip(b).map(|(x, y)| x + y).collect()))
            }
            (GroupElement::Heisenberg([a, b, c]), GroupElement::Heisenberg([a2, b2, c2])) => {
                Ok(GroupElement::Heisenberg([a + a2, b + b2, c + c2 + a * b2]))
            }
            _ => Err(GroupError::MixedOperands {
                left: self.descriptor(),
                right: rhs.descriptor(),
            }),
        }
    }

    pub fn invert(&self) -> GroupElement {
        match self {
            GroupElement::Lamplighter(l) => GroupElement::Lamplighter(l.invert()),
            GroupElement::FreeAbelian(v) => GroupElement::FreeAbelian(v.iter().map(|x| -x).collect()),
            GroupElement::Heisenberg([a, b, c]) => GroupElement::Heisenberg([-a, -b, a * b - c]),
        }
    }

    /// `self^{-1} x self`.
    pub fn conjugate(&self, x: &GroupElement) -> GroupElement {
        &(&self.invert() * x) * self
    }

    /// The coordinate carried by the canonical homomorphism onto `Z`
    /// (walker position, first coordinate, or `a` for Heisenberg).
    pub fn primary(&self) -> &BigInt {
        match self {
            GroupElement::Lamplighter(l) => &l.t,
            GroupElement::FreeAbelian(v) => &v[0],
            GroupElement::Heisenberg(h) => &h[0],
        }
    }

    /// Largest absolute value among the remaining coordinates (lamp
    /// positions for the lamplighter group).
    pub fn spread(&self) -> BigInt {
        let others: Box<dyn Iterator<Item = &BigInt>> = match self {
            GroupElement::Lamplighter(l) => Box::new(l.lamps.iter()),
            GroupElement::FreeAbelian(v) => Box::new(v[1..].iter()),
            GroupElement::Heisenberg(h) => Box::new(h[1..].iter()),
        };
        others.map(|x| x.abs()).max().unwrap_or_else(BigInt::zero)
    }

    pub fn as_lamps(&self) -> Option<&LampConfig> {
        match self {
            GroupElement::Lamplighter(l) => Some(l),
            _ => None,
        }
    }
}

/// Group product. Panics when the operands live in different groups; use
/// [`GroupElement::compose`] for a checked product.
impl Mul for &GroupElement {
    type Output = GroupElement;

    fn mul(self, rhs: &GroupElement) -> GroupElement {
        match self.compose(rhs) {
            Ok(g) => g,
            Err(e) => panic!("{e}"),
        }
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

/// Left-to-right product of a word. For the lamplighter group the lamp set is
/// toggled in place, so a word of length `m` costs `O(m log m)` big-integer
/// additions rather than `O(m^2)` copies.
pub fn product<'a, I>(desc: GroupDescriptor, word: I) -> GroupElement
where
    I: IntoIterator<Item = &'a GroupElement>,
{
    match desc {
        GroupDescriptor::Lamplighter => {
            let mut lit: BTreeSet<BigInt> = BTreeSet::new();
            let mut t = BigInt::zero();
            for x in word {
                let l = x.as_lamps().expect("lamplighter word contains a foreign element");
                for p in &l.lamps {
                    let q = p + &t;
                    if !lit.remove(&q) {
                        lit.insert(q);
                    }
                }
                t += &l.t;
            }
            GroupElement::Lamplighter(LampConfig { lamps: lit.into_iter().collect(), t })
        }
        _ => word.into_iter().fold(desc.identity(), |acc, x| &acc * x),
    }
}
