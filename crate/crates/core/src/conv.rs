//! Finitely supported sub-probability measures on a group.
//!
//! A [`SparseMeasure`] stores atoms in insertion order together with a
//! scalar `lost` budget: mass known to exist but not stored, either because
//! the measure was truncated or because atoms were pruned. Total variation
//! is the full `l1` distance, so its worst-case error is the sum of the two
//! lost budgets.

use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupDescriptor, GroupElement};
use crate::stats::KahanSum;

pub const DEFAULT_SUPPORT_CAP: usize = 1_000_000;
const CHUNK: usize = 2048;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvError {
    #[error("measures live on different groups ({left} vs {right})")]
    MixedGroups { left: GroupDescriptor, right: GroupDescriptor },
    #[error("support grew past the cap of {cap} atoms (reached {reached})")]
    Overflow { cap: usize, reached: usize },
    #[error("invalid mass {0} for an atom")]
    InvalidMass(f64),
    #[error("convolution power must be at least 1")]
    ZeroPower,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolveOptions {
    /// Single products `mu(x) nu(y)` and merged atoms with mass strictly
    /// below this are dropped; their mass moves to the lost budget.
    pub prune: f64,
    pub support_cap: usize,
}

impl Default for ConvolveOptions {
    fn default() -> Self {
        ConvolveOptions { prune: 0.0, support_cap: DEFAULT_SUPPORT_CAP }
    }
}

impl ConvolveOptions {
    pub fn with_prune(prune: f64) -> Self {
        ConvolveOptions { prune, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMeasure {
    desc: GroupDescriptor,
    atoms: IndexMap<GroupElement, f64>,
    lost: f64,
    renormalized: bool,
}

/// `l1` distance with the worst-case correction from unstored mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvDistance {
    pub tv: f64,
    pub correction: f64,
}

impl SparseMeasure {
    pub fn zero(desc: GroupDescriptor) -> Self {
        SparseMeasure { desc, atoms: IndexMap::new(), lost: 0.0, renormalized: false }
    }

    pub fn dirac(g: GroupElement) -> Self {
        let desc = g.descriptor();
        SparseMeasure { desc, atoms: IndexMap::from([(g, 1.0)]), lost: 0.0, renormalized: false }
    }

    /// Sums repeated atoms and drops zero masses.
    pub fn from_atoms(
        desc: GroupDescriptor,
        atoms: impl IntoIterator<Item = (GroupElement, f64)>,
    ) -> Result<Self, ConvError> {
        let mut mu = SparseMeasure::zero(desc);
        for (g, w) in atoms {
            mu.add(g, w)?;
        }
        Ok(mu)
    }

    pub fn add(&mut self, g: GroupElement, w: f64) -> Result<(), ConvError> {
        if !(w.is_finite() && w >= 0.0) {
            return Err(ConvError::InvalidMass(w));
        }
        if g.descriptor() != self.desc {
            return Err(ConvError::MixedGroups { left: self.desc, right: g.descriptor() });
        }
        if w > 0.0 {
            *self.atoms.entry(g).or_insert(0.0) += w;
        }
        Ok(())
    }

    pub fn add_lost(&mut self, w: f64) {
        self.lost += w;
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        self.desc
    }

    pub fn mass(&self, g: &GroupElement) -> f64 {
        self.atoms.get(g).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroupElement, f64)> + '_ {
        self.atoms.iter().map(|(g, &w)| (g, w))
    }

    pub fn lost(&self) -> f64 {
        self.lost
    }

    pub fn is_renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.values().copied().collect::<KahanSum>().value()
    }

    /// Scales the stored atoms to total mass one and clears the lost budget.
    pub fn renormalized(&self) -> SparseMeasure {
        let z = self.total_mass();
        SparseMeasure {
            desc: self.desc,
            atoms: self.atoms.iter().map(|(g, &w)| (g.clone(), w / z)).collect(),
            lost: 0.0,
            renormalized: true,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.atoms.iter().all(|(g, &w)| (w - self.mass(&g.invert())).abs() <= tol)
    }

    /// Left translation: the atom at `x` moves to `h x`.
    pub fn translate(&self, h: &GroupElement) -> Result<SparseMeasure, ConvError> {
        if h.descriptor() != self.desc {
            return Err(ConvError::MixedGroups { left: self.desc, right: h.descriptor() });
        }
        Ok(SparseMeasure {
            desc: self.desc,
            atoms: self.atoms.iter().map(|(g, &w)| (h * g, w)).collect(),
            lost: self.lost,
            renormalized: self.renormalized,
        })
    }

    /// `(mu * nu)(z) = sum_x mu(x) nu(x^{-1} z)`.
    ///
    /// Left atoms are split into fixed chunks that accumulate in parallel
    /// and are merged in chunk order, so every atom receives its summands in
    /// the same order as a sequential double loop.
    pub fn convolve(&self, other: &SparseMeasure, opts: &ConvolveOptions) -> Result<SparseMeasure, ConvError> {
        if self.desc != other.desc {
            return Err(ConvError::MixedGroups { left: self.desc, right: other.desc });
        }
        let left: Vec<(&GroupElement, f64)> = self.iter().collect();
        let overflow = |reached| ConvError::Overflow { cap: opts.support_cap, reached };
        let partials: Vec<(IndexMap<GroupElement, f64>, f64)> = left
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = IndexMap::with_capacity(chunk.len() * other.len().min(64));
                let mut dropped = KahanSum::default();
                for &(x, wx) in chunk {
                    for (y, wy) in other.iter() {
                        let w = wx * wy;
                        if w < opts.prune {
                            dropped.add(w);
                        } else {
                            *acc.entry(x * y).or_insert(0.0) += w;
                        }
                    }
                    if acc.len() > opts.support_cap {
                        return Err(overflow(acc.len()));
                    }
                }
                Ok((acc, dropped.value()))
            })
            .collect::<Result<_, _>>()?;
        let mut parts = partials.into_iter();
        let (mut atoms, first) = parts.next().unwrap_or_default();
        let mut pruned = KahanSum::default();
        pruned.add(first);
        for (part, dropped) in parts {
            pruned.add(dropped);
            for (g, w) in part {
                *atoms.entry(g).or_insert(0.0) += w;
            }
            if atoms.len() > opts.support_cap {
                return Err(overflow(atoms.len()));
            }
        }
        if opts.prune > 0.0 {
            atoms.retain(|_, w| {
                if *w < opts.prune {
                    pruned.add(*w);
                    false
                } else {
                    true
                }
            });
        }
        let lost = self.lost * (other.total_mass() + other.lost) + self.total_mass() * other.lost + pruned.value();
        Ok(SparseMeasure {
            desc: self.desc,
            atoms,
            lost,
            renormalized: self.renormalized && other.renormalized,
        })
    }

    pub fn convolve_power(&self, m: usize, opts: &ConvolveOptions) -> Result<SparseMeasure, ConvError> {
        if m == 0 {
            return Err(ConvError::ZeroPower);
        }
        let mut acc = self.clone();
        for _ in 1..m {
            acc = acc.convolve(self, opts)?;
        }
        Ok(acc)
    }

    pub fn tv_norm(&self, other: &SparseMeasure) -> Result<TvDistance, ConvError> {
        if self.desc != other.desc {
            return Err(ConvError::MixedGroups { left: self.desc, right: other.desc });
        }
        let mut sum = KahanSum::default();
        for (g, w) in self.iter() {
            sum.add((w - other.mass(g)).abs());
        }
        for (g, w) in other.iter() {
            if !self.atoms.contains_key(g) {
                sum.add(w);
            }
        }
        Ok(TvDistance { tv: sum.value(), correction: self.lost + other.lost })
    }

    /// Shannon entropy of the stored atoms, in nats.
    pub fn entropy(&self) -> f64 {
        self.atoms
            .values()
            .filter(|&&w| w > 0.0)
            .map(|&w| -w * w.ln())
            .collect::<KahanSum>()
            .value()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub m: usize,
    pub tv: f64,
    pub error: f64,
    pub support_size: usize,
    #[serde(default)]
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvProfile {
    pub rows: Vec<ProfileRow>,
    pub requested: usize,
    /// Set when the profile stopped early.
    pub overflow: Option<String>,
}

impl TvProfile {
    pub fn reached(&self) -> usize {
        self.rows.last().map_or(0, |r| r.m)
    }

    /// Indices `m` where the profile increases by more than the error bars
    /// of both neighbours plus `slack`.
    pub fn monotonicity_violations(&self, slack: f64) -> Vec<usize> {
        self.rows
            .windows(2)
            .filter(|w| w[1].tv > w[0].tv + w[0].error + w[1].error + slack)
            .map(|w| w[1].m)
            .collect()
    }
}

/// `||h mu^{*m} - mu^{*m}||` for `m = 1..=m_max`.
pub fn tv_profile(
    mu: &SparseMeasure,
    h: &GroupElement,
    m_max: usize,
    opts: &ConvolveOptions,
) -> Result<TvProfile, ConvError> {
    let mut rows = Vec::with_capacity(m_max);
    let mut power = mu.clone();
    let mut overflow = None;
    let mut clock = Instant::now();
    for m in 1..=m_max {
        if m > 1 {
            match power.convolve(mu, opts) {
                Ok(next) => power = next,
                Err(e @ ConvError::Overflow { .. }) => {
                    overflow = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let d = power.translate(h)?.tv_norm(&power)?;
        rows.push(ProfileRow {
            m,
            tv: d.tv,
            error: d.correction,
            support_size: power.len(),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        clock = Instant::now();
    }
    Ok(TvProfile { rows, requested: m_max, overflow })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(v: i64) -> GroupElement {
        GroupElement::free_abelian([v])
    }

    fn zdesc() -> GroupDescriptor {
        GroupDescriptor::free_abelian(1).unwrap()
    }

    fn coin() -> SparseMeasure {
        SparseMeasure::from_atoms(zdesc(), [(z(1), 0.5), (z(-1), 0.5)]).unwrap()
    }

    #[test]
    fn dirac_identity_is_neutral() {
        let mu = coin();
        let e = SparseMeasure::dirac(z(0));
        let got = e.convolve(&mu, &ConvolveOptions::default()).unwrap();
        assert_eq!(got.tv_norm(&mu).unwrap().tv, 0.0);
    }

    #[test]
    fn binomial_square() {
        let sq = coin().convolve_power(2, &ConvolveOptions::default()).unwrap();
        assert_eq!(sq.mass(&z(2)), 0.25);
        assert_eq!(sq.mass(&z(0)), 0.5);
        assert_eq!(sq.mass(&z(-2)), 0.25);
        assert_eq!(sq.len(), 3);
    }

    #[test]
    fn tv_cases() {
        let mu = coin();
        assert_eq!(mu.tv_norm(&mu).unwrap().tv, 0.0);
        let d = SparseMeasure::dirac(z(0)).tv_norm(&SparseMeasure::dirac(z(4))).unwrap();
        assert_eq!(d.tv, 2.0);
        let shifted = mu.translate(&z(2)).unwrap();
        assert_eq!(shifted.tv_norm(&mu).unwrap().tv, 1.0);
    }

    #[test]
    fn translation_round_trip() {
        let h = GroupElement::lamplighter([0], 1);
        let mu = SparseMeasure::from_atoms(
            GroupDescriptor::Lamplighter,
            [(GroupElement::lamplighter([2], -1), 0.3), (GroupElement::lamplighter([5], 0), 0.7)],
        )
        .unwrap();
        let back = mu.translate(&h).unwrap().translate(&h.invert()).unwrap();
        assert_eq!(back, mu);
        let e = GroupDescriptor::Lamplighter.identity();
        assert_eq!(SparseMeasure::dirac(e).translate(&h).unwrap(), SparseMeasure::dirac(h));
    }

    #[test]
    fn pruning_moves_mass_to_the_budget() {
        let mu = SparseMeasure::from_atoms(zdesc(), [(z(1), 0.9), (z(-1), 0.1)]).unwrap();
        let sq = mu.convolve(&mu, &ConvolveOptions::with_prune(0.05)).unwrap();
        assert_eq!(sq.len(), 2);
        assert!((sq.lost() - 0.01).abs() < 1e-15);
        assert!((sq.total_mass() + sq.lost() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overflow_is_reported() {
        let lazy = SparseMeasure::from_atoms(zdesc(), [(z(-1), 1.0 / 3.0), (z(0), 1.0 / 3.0), (z(1), 1.0 / 3.0)])
            .unwrap();
        let opts = ConvolveOptions { prune: 0.0, support_cap: 6 };
        assert!(matches!(lazy.convolve_power(4, &opts), Err(ConvError::Overflow { cap: 6, .. })));
        let profile = tv_profile(&lazy, &z(1), 5, &opts).unwrap();
        assert_eq!(profile.reached(), 2);
        assert!(profile.overflow.is_some());
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(SparseMeasure::dirac(z(3)).entropy(), 0.0);
        let u = SparseMeasure::from_atoms(zdesc(), (0..4).map(|i| (z(i), 0.25))).unwrap();
        assert!((u.entropy() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn mixed_groups_are_rejected() {
        let a = SparseMeasure::dirac(z(0));
        let b = SparseMeasure::dirac(GroupDescriptor::Lamplighter.identity());
        assert!(matches!(a.convolve(&b, &ConvolveOptions::default()), Err(ConvError::MixedGroups { .. })));
        assert!(a.tv_norm(&b).is_err());
    }

    #[test]
    fn renormalized_is_flagged() {
        let mut mu = SparseMeasure::from_atoms(zdesc(), [(z(1), 0.2), (z(-1), 0.2)]).unwrap();
        mu.add_lost(0.6);
        let r = mu.renormalized();
        assert!(r.is_renormalized() && !mu.is_renormalized());
        assert!((r.total_mass() - 1.0).abs() < 1e-15);
        assert_eq!(r.lost(), 0.0);
    }
}
