//! Wavefunctions on a periodic grid and their unitary evolution.

pub mod dump;
pub mod fft;
pub mod grid;
pub mod propagate;
pub mod system;
pub mod wave;

pub use grid::{GridSpec, Point};
pub use propagate::{Propagator, Stream};
pub use system::{Potential, SystemConfig};
pub use wave::{init_gaussian, position_density, superpose, GaussianPacket, Superposition, WaveFunction};
