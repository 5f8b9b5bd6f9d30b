//! Fixtures shared by the benchmarks.

use lampwalk_core::builder::{build, BuildOptions, ConstructionState, OracleMode};
use lampwalk_core::conv::SparseMeasure;
use lampwalk_core::group::{GroupDescriptor, GroupElement};

/// Lamplighter state with padding 8 and `steps` stored steps.
pub fn lamplighter_state(steps: u64) -> ConstructionState {
    build(&BuildOptions::new(GroupDescriptor::Lamplighter, 0.05, 8, 2, 8 + steps, OracleMode::Certificate))
        .expect("small certificate build")
}

/// Uniform measure on the lamplighter ball of radius one plus the identity.
pub fn lamplighter_lazy_step() -> SparseMeasure {
    let g = GroupDescriptor::Lamplighter;
    let mut atoms = g.generators();
    atoms.push(g.identity());
    let w = 1.0 / atoms.len() as f64;
    SparseMeasure::from_atoms(g, atoms.into_iter().map(|a| (a, w))).expect("uniform weights")
}

/// A word of `len` lamplighter elements with growing shifts.
pub fn lamplighter_word(len: i64) -> Vec<GroupElement> {
    (1..=len).map(|i| GroupElement::lamplighter([i % 7, -i], i * 3 - len)).collect()
}
