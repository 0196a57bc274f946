//! Coarse-grained position histories of a single particle, assigned
//! probabilities two ways: by the decoherence functional of chains of region
//! projectors, and by classifying quantum-equilibrium Bohmian trajectories.

// `!(x >= y)` is used on purpose so that NaN fails validation; per-axis loops
// index several parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bohm;
pub mod bohmhist;
pub mod error;
pub mod fmt;
pub mod histories;
pub mod qstate;
pub mod records;

pub use bohm::{sample_initial, AdvanceOptions, TrajectoryEnsemble};
pub use bohmhist::{bm_probabilities, compare, BohmHistogram, CompareOptions, ComparisonReport};
pub use error::{Error, Result};
pub use histories::{
    decoherence_matrix, dh_probabilities, DecoherenceMatrix, DhTable, HistoryLabel, HistorySpec, PartitionSpec,
    RegionPartition, TreeOptions,
};
pub use num_complex::Complex64;
pub use qstate::{
    init_gaussian, position_density, superpose, GaussianPacket, GridSpec, Point, Potential, Propagator, SystemConfig,
    WaveFunction,
};
pub use records::{FiniteModel, Formulation};
