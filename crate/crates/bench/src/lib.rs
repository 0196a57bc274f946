//! Fixtures shared by the kernel benchmarks.

use histlab::{init_gaussian, superpose, Complex64, GaussianPacket, GridSpec, Propagator, SystemConfig, WaveFunction};

pub struct Fixture {
    pub sys: SystemConfig,
    pub prop: Propagator,
    pub psi: WaveFunction,
}

/// Two interfering packets on an `n` by `n` grid of side 8.
pub fn two_packets(n: usize) -> Fixture {
    let grid = GridSpec::square(n, 8.0).expect("grid");
    let sys = SystemConfig::free(1.0, 1.0).expect("system");
    let packet = |x: f64, kx: f64| GaussianPacket { center: vec![x, 0.5], momentum: vec![kx, -1.0], sigma: 0.5 };
    let a = init_gaussian(&grid, &sys, &packet(-1.2, 3.0)).expect("packet");
    let b = init_gaussian(&grid, &sys, &packet(1.2, -3.0)).expect("packet");
    let psi = superpose(&[(Complex64::new(1.0, 0.0), &a), (Complex64::new(0.0, 1.0), &b)]).expect("superpose").psi;
    let prop = Propagator::new(&grid, &sys).expect("propagator");
    Fixture { sys, prop, psi }
}
