use std::collections::{BTreeSet, HashSet};

use super::{GroupDescriptor, GroupElement};

/// Deterministic bijection from `1, 2, 3, ...` onto a group.
///
/// Elements are listed by word length with respect to
/// [`GroupDescriptor::generators`]; each sphere is sorted in canonical order.
/// Index 1 is the identity.
#[derive(Clone, Debug)]
pub struct Enumerator {
    desc: GroupDescriptor,
    generators: Vec<GroupElement>,
    listed: Vec<GroupElement>,
    seen: HashSet<GroupElement>,
    sphere_start: usize,
}

impl Enumerator {
    pub fn new(desc: GroupDescriptor) -> Self {
        let e = desc.identity();
        Enumerator {
            desc,
            generators: desc.generators(),
            listed: vec![e.clone()],
            seen: HashSet::from([e]),
            sphere_start: 0,
        }
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        self.desc
    }

    fn grow(&mut self) {
        let mut next = BTreeSet::new();
        for x in &self.listed[self.sphere_start..] {
            for s in &self.generators {
                let y = x * s;
                if !self.seen.contains(&y) {
                    next.insert(y);
                }
            }
        }
        self.sphere_start = self.listed.len();
        for y in next {
            self.seen.insert(y.clone());
            self.listed.push(y);
        }
    }

    /// The element at 1-based position `index`.
    pub fn get(&mut self, index: u64) -> &GroupElement {
        assert!(index >= 1, "enumeration indices start at 1");
        let i = usize::try_from(index - 1).expect("index exceeds address space");
        while self.listed.len() <= i {
            self.grow();
        }
        &self.listed[i]
    }

    /// Elements `1..=count` in order.
    pub fn prefix(&mut self, count: u64) -> &[GroupElement] {
        if count > 0 {
            self.get(count);
        }
        &self.listed[..count as usize]
    }
}

pub fn enumerate_elements(desc: GroupDescriptor, index: u64) -> GroupElement {
    Enumerator::new(desc).get(index).clone()
}

/// Distinct conjugates `g^{-1} x g` over the first `count` enumerated `g`.
/// A heuristic probe of infinite conjugacy classes, not a proof.
pub fn conjugate_probe(x: &GroupElement, count: u64) -> BTreeSet<GroupElement> {
    let mut en = Enumerator::new(x.descriptor());
    en.prefix(count).iter().map(|g| g.conjugate(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_first_then_generators_in_order() {
        let mut en = Enumerator::new(GroupDescriptor::Lamplighter);
        assert!(en.get(1).is_identity());
        let sphere: Vec<_> = (2..=4).map(|i| en.get(i).clone()).collect();
        assert_eq!(
            sphere,
            vec![
                GroupElement::lamplighter(std::iter::empty::<i64>(), -1),
                GroupElement::lamplighter(std::iter::empty::<i64>(), 1),
                GroupElement::lamplighter([0], 0),
            ]
        );
    }

    #[test]
    fn conjugate_probe_cases() {
        let e = GroupDescriptor::Lamplighter.identity();
        assert_eq!(conjugate_probe(&e, 50).len(), 1);
        let central = GroupElement::heisenberg(0, 0, 1);
        assert_eq!(conjugate_probe(&central, 200), BTreeSet::from([central.clone()]));
        let lamp = GroupElement::lamplighter([0], 0);
        assert!(conjugate_probe(&lamp, 100).len() >= 10);
    }
}
