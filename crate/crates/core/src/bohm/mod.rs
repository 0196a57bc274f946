//! Guidance velocities, quantum-equilibrium sampling and trajectory ensembles.

pub mod advance;
pub mod diagnostics;
pub mod ensemble;
pub mod io;
pub mod velocity;

pub use advance::{advance_ensemble, advance_ensemble_observed, AdvanceOptions, RecordEvent};
pub use diagnostics::{continuity_residual, ks_marginal, transport_check, transport_distance};
pub use ensemble::{sample_initial, trajectory_rng, TrajStatus, TrajectoryEnsemble};
pub use io::EnsembleSummary;
pub use velocity::{flux_velocity, velocity_field, Interpolation, VelocityField, VelocityKernel, DEFAULT_EPS_NODE_REL};
