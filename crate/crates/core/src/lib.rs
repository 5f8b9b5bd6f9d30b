//! Fully supported symmetric random walks on the lamplighter group whose
//! convolution powers stay far from their translates in total variation.
//!
//! The crate is organised bottom-up:
//!
//! * [`group`]: exact arithmetic, canonical encodings, enumeration and product
//!   balls for the lamplighter group and the abelian / Heisenberg controls;
//! * [`switching`]: switching and super-switching elements, exact search and
//!   coordinate certificates;
//! * [`heavytail`]: the `n^{-5/4}` distribution on the positive integers, its
//!   record statistics and the calibration of the `(K, N)` constants;
//! * [`builder`]: the recursive construction of the step measure, the sample
//!   space `Omega` of step-index/letter pairs and the disjointness check;
//! * [`conv`]: sparse convolution, translation and total variation;
//! * [`harness`]: configuration, the end-to-end pipeline and reports.
//!
//! Total variation is the full `l1` distance `sum_g |mu(g) - nu(g)|`, so
//! measures with disjoint supports are at distance 2.

pub mod builder;
pub mod conv;
pub mod group;
pub mod harness;
pub mod heavytail;
pub mod rng;
pub mod stats;
pub mod switching;

pub use builder::{BuildError, BuildOptions, ConstructionState, OracleMode};
pub use conv::{ConvError, ConvolveOptions, SparseMeasure};
pub use group::{GroupDescriptor, GroupElement, GroupError, SymmetricSet};
pub use harness::{ExperimentConfig, Report};
pub use heavytail::{HeavyTailDist, HeavyTailError, LemmaParams};
pub use switching::{SwitchingCertificate, SwitchingError};
