use std::collections::HashSet;

use indexmap::IndexSet;
use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::{GroupElement, GroupError};

/// Coordinate bounds dominating every member of a set.
///
/// For the lamplighter group `shift` bounds `|t|` (written `R_t` elsewhere)
/// and `spread` bounds every lamp position (`R_s`). For the controls `shift`
/// bounds the primary coordinate and `spread` all the others.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordBounds {
    #[serde(with = "super::bigint_string")]
    pub shift: BigInt,
    #[serde(with = "super::bigint_string")]
    pub spread: BigInt,
}

impl CoordBounds {
    pub fn zero() -> Self {
        CoordBounds { shift: BigInt::zero(), spread: BigInt::zero() }
    }

    pub fn of<'a>(elements: impl IntoIterator<Item = &'a GroupElement>) -> Self {
        let mut b = CoordBounds::zero();
        for x in elements {
            b.absorb(x);
        }
        b
    }

    /// Enlarges the bounds to cover `x`.
    pub fn absorb(&mut self, x: &GroupElement) {
        let s = x.primary().abs();
        if s > self.shift {
            self.shift = s;
        }
        let r = x.spread();
        if r > self.spread {
            self.spread = r;
        }
    }

    pub fn merged(&self, other: &CoordBounds) -> CoordBounds {
        CoordBounds {
            shift: self.shift.clone().max(other.shift.clone()),
            spread: self.spread.clone().max(other.spread.clone()),
        }
    }

    pub fn dominates(&self, x: &GroupElement) -> bool {
        x.primary().abs() <= self.shift && x.spread() <= self.spread
    }
}

/// A finite subset of a group closed under inversion, iterated in canonical
/// order.
#[derive(Clone, Debug)]
pub struct SymmetricSet {
    elements: IndexSet<GroupElement>,
    bounds: CoordBounds,
}

impl SymmetricSet {
    /// Fails with [`GroupError::NotSymmetric`] when some inverse is missing.
    pub fn new(elements: impl IntoIterator<Item = GroupElement>) -> Result<Self, GroupError> {
        let set: HashSet<GroupElement> = elements.into_iter().collect();
        if let Some(x) = set.iter().find(|x| !set.contains(&x.invert())) {
            return Err(GroupError::NotSymmetric(x.to_string()));
        }
        Ok(Self::from_unsorted(set))
    }

    /// Adds whatever inverses are missing.
    pub fn closure(elements: impl IntoIterator<Item = GroupElement>) -> Self {
        let mut set = HashSet::new();
        for x in elements {
            set.insert(x.invert());
            set.insert(x);
        }
        Self::from_unsorted(set)
    }

    fn from_unsorted(set: HashSet<GroupElement>) -> Self {
        let mut v: Vec<GroupElement> = set.into_iter().collect();
        v.sort_unstable();
        let bounds = CoordBounds::of(&v);
        SymmetricSet { elements: v.into_iter().collect(), bounds }
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        self.elements.contains(x)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &GroupElement> + '_ {
        self.elements.iter()
    }

    pub fn bounds(&self) -> &CoordBounds {
        &self.bounds
    }

    pub fn is_subset(&self, other: &SymmetricSet) -> bool {
        self.iter().all(|x| other.contains(x))
    }
}

/// All products `x_1 ... x_j` with `j <= k` and `x_i` in `s`, together with
/// the identity. Stops early once a layer adds nothing new; fails when the
/// ball grows past `budget` elements.
pub fn product_ball(s: &SymmetricSet, k: usize, budget: usize) -> Result<SymmetricSet, GroupError> {
    let Some(first) = s.iter().next() else {
        return Err(GroupError::Decode { what: "product ball", reason: "empty generating set".into() });
    };
    let e = first.descriptor().identity();
    let mut ball: HashSet<GroupElement> = HashSet::from([e.clone()]);
    let mut frontier = vec![e];
    for radius in 1..=k {
        let mut next = Vec::new();
        for x in &frontier {
            for y in s.iter() {
                let z = x * y;
                if !ball.contains(&z) {
                    ball.insert(z.clone());
                    next.push(z);
                    if ball.len() > budget {
                        return Err(GroupError::BudgetExceeded { budget, radius });
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(SymmetricSet::from_unsorted(ball))
}

/// Membership in `S^k` without enumerating it: since `S` is symmetric and
/// contains `e`, `g` lies in `S^k` iff `y^{-1} g` lies in `S^{k - j}` for some
/// `y` in `S^j`. Both half-balls are enumerated once.
#[derive(Clone, Debug)]
pub struct BallOracle {
    near: SymmetricSet,
    far: SymmetricSet,
    radius: usize,
}

impl BallOracle {
    pub fn new(s: &SymmetricSet, k: usize, budget: usize) -> Result<Self, GroupError> {
        let mut with_e = s.elements.iter().cloned().collect::<HashSet<_>>();
        if let Some(x) = s.iter().next() {
            with_e.insert(x.descriptor().identity());
        }
        let s = SymmetricSet::from_unsorted(with_e);
        let far = product_ball(&s, k / 2, budget)?;
        let near = product_ball(&s, k - k / 2, budget)?;
        Ok(BallOracle { near, far, radius: k })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        self.near.iter().any(|y| self.far.contains(&(&y.invert() * g)))
    }
}
