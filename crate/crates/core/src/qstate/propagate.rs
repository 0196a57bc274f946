use num_complex::Complex64;
use rayon::prelude::*;

use super::fft::GridFft;
use super::grid::GridSpec;
use super::system::SystemConfig;
use super::wave::WaveFunction;
use crate::error::{Error, Result};

/// Split-step propagator for one grid and Hamiltonian.
///
/// For a free particle the kinetic factor is applied once for the whole
/// interval, which is exact. Otherwise each step is the Strang product
/// `exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2)`.
#[derive(Clone, Debug)]
pub struct Propagator {
    grid: GridSpec,
    sys: SystemConfig,
    fft: GridFft,
    /// `hbar k^2 / 2m` per Fourier mode.
    omega: Vec<f64>,
    potential: Option<Vec<f64>>,
}

impl Propagator {
    pub fn new(grid: &GridSpec, sys: &SystemConfig) -> Result<Self> {
        let potential = sys.potential_on(grid)?;
        let kx = grid.wavenumbers(0);
        let ky = if grid.dims() == 2 { grid.wavenumbers(1) } else { vec![0.0] };
        let c = sys.hbar / (2.0 * sys.mass);
        let mut omega = Vec::with_capacity(grid.len());
        for y in &ky {
            for x in &kx {
                omega.push(c * (x * x + y * y));
            }
        }
        Ok(Propagator { grid: grid.clone(), sys: sys.clone(), fft: GridFft::new(grid), omega, potential })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn system(&self) -> &SystemConfig {
        &self.sys
    }

    pub fn fft(&self) -> &GridFft {
        &self.fft
    }

    /// Kinetic phase per step at the highest grid wavenumber, in radians.
    pub fn nyquist_phase(&self, dt: f64) -> f64 {
        let kmax2: f64 = (0..self.grid.dims()).map(|a| self.grid.nyquist(a).powi(2)).sum();
        self.sys.hbar * kmax2 / (2.0 * self.sys.mass) * dt
    }

    /// Advance `psi` by `steps` steps of `dt`.
    pub fn evolve(&self, psi: &WaveFunction, dt: f64, steps: usize) -> Result<WaveFunction> {
        self.grid.ensure_same(psi.grid())?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        if steps == 0 {
            return Ok(psi.clone());
        }
        let total = dt * steps as f64;
        let mut amps = psi.amplitudes().to_vec();
        match &self.potential {
            None => self.kinetic(&mut amps, total),
            Some(v) => {
                let half: Vec<Complex64> =
                    v.par_iter().map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * self.sys.hbar))).collect();
                for _ in 0..steps {
                    mul(&mut amps, &half);
                    self.kinetic(&mut amps, dt);
                    mul(&mut amps, &half);
                }
            }
        }
        Ok(WaveFunction::new_unchecked(self.grid.clone(), amps, psi.time() + total))
    }

    /// Advance `psi` by an arbitrary non-negative interval. Free particles
    /// move in one exact step; otherwise the interval is cut into the fewest
    /// steps no longer than `max_dt`.
    pub fn evolve_for(&self, psi: &WaveFunction, interval: f64, max_dt: f64) -> Result<WaveFunction> {
        if !(interval >= 0.0) {
            return Err(Error::invalid(format!("cannot evolve backwards ({interval})")));
        }
        if interval == 0.0 {
            return Ok(psi.clone());
        }
        if self.potential.is_none() {
            return self.evolve(psi, interval, 1);
        }
        let steps = (interval / max_dt - 1e-9).ceil().max(1.0) as usize;
        self.evolve(psi, interval / steps as f64, steps)
    }

    fn kinetic(&self, amps: &mut [Complex64], dt: f64) {
        self.fft.forward(amps);
        amps.par_iter_mut().zip(&self.omega).for_each(|(z, w)| *z *= Complex64::from_polar(1.0, -w * dt));
        self.fft.inverse(amps);
    }

    /// Fields at `t0 + k dt` for `k = 0..=steps`, computed lazily.
    pub fn stream(&self, psi0: &WaveFunction, dt: f64, steps: usize) -> Result<Stream<'_>> {
        self.grid.ensure_same(psi0.grid())?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("time step must be positive, got {dt}")));
        }
        let spectrum = if self.potential.is_none() {
            let mut s = psi0.amplitudes().to_vec();
            self.fft.forward(&mut s);
            Some(s)
        } else {
            None
        };
        Ok(Stream { prop: self, psi0: psi0.clone(), current: None, spectrum, dt, next: 0, steps })
    }
}

fn mul(a: &mut [Complex64], b: &[Complex64]) {
    a.par_iter_mut().zip(b).for_each(|(x, y)| *x *= y);
}

/// Time-ordered fields produced by [`Propagator::stream`].
///
/// Free fields are computed directly from the initial spectrum, so the k-th
/// field is exactly `evolve(psi0, k*dt, 1)`.
pub struct Stream<'a> {
    prop: &'a Propagator,
    psi0: WaveFunction,
    current: Option<WaveFunction>,
    spectrum: Option<Vec<Complex64>>,
    dt: f64,
    next: usize,
    steps: usize,
}

impl Stream<'_> {
    pub fn dt(&self) -> f64 {
        self.dt
    }
}

impl Iterator for Stream<'_> {
    type Item = WaveFunction;

    fn next(&mut self) -> Option<WaveFunction> {
        if self.next > self.steps {
            return None;
        }
        let k = self.next;
        self.next += 1;
        let t = k as f64 * self.dt;
        let out = if k == 0 {
            self.psi0.clone()
        } else if let Some(spec) = &self.spectrum {
            let mut a: Vec<Complex64> =
                spec.par_iter().zip(&self.prop.omega).map(|(z, w)| z * Complex64::from_polar(1.0, -w * t)).collect();
            self.prop.fft.inverse(&mut a);
            WaveFunction::new_unchecked(self.prop.grid.clone(), a, self.psi0.time() + t)
        } else {
            let prev = self.current.as_ref().unwrap_or(&self.psi0);
            let next = self.prop.evolve(prev, self.dt, 1).ok()?;
            // keep times on the k*dt lattice rather than accumulating sums
            next.at_time(self.psi0.time() + t)
        };
        self.current = Some(out.clone());
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.steps + 1).saturating_sub(self.next);
        (n, Some(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::system::Potential;
    use crate::qstate::wave::{init_gaussian, GaussianPacket};

    fn random_field(grid: &GridSpec, seed: u64) -> WaveFunction {
        // small LCG keeps the test free of extra dependencies
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut r = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let amps = (0..grid.len()).map(|_| Complex64::new(r(), r())).collect();
        WaveFunction::from_parts(grid.clone(), amps, 0.0).unwrap()
    }

    fn max_diff(a: &WaveFunction, b: &WaveFunction) -> f64 {
        a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_steps_is_identity() {
        let g = GridSpec::square(32, 4.0).unwrap();
        let p = Propagator::new(&g, &SystemConfig::default()).unwrap();
        let psi = random_field(&g, 1);
        assert_eq!(p.evolve(&psi, 0.1, 0).unwrap(), psi);
    }

    #[test]
    fn free_packet_moves_at_group_velocity() {
        let g = GridSpec::square(128, 16.0).unwrap();
        let sys = SystemConfig::free(2.0, 1.0).unwrap();
        let pk = GaussianPacket { center: vec![-3.0, 1.0], momentum: vec![6.0, -4.0], sigma: 0.6 };
        let psi = init_gaussian(&g, &sys, &pk).unwrap();
        let prop = Propagator::new(&g, &sys).unwrap();
        let t = 1.5;
        let out = prop.evolve(&psi, t, 1).unwrap();
        let m = out.mean_position();
        assert!((m[0] - (-3.0 + 3.0 * t)).abs() < 1e-6 * 16.0, "{m:?}");
        assert!((m[1] - (1.0 - 2.0 * t)).abs() < 1e-6 * 16.0, "{m:?}");
        assert!((out.time() - t).abs() < 1e-15);
    }

    #[test]
    fn harmonic_ground_state_is_nearly_stationary() {
        let g = GridSpec::line(128, 16.0).unwrap();
        let sys = SystemConfig::default().with_potential(Potential::Harmonic { omega: vec![1.0] });
        let pk = GaussianPacket { center: vec![0.0], momentum: vec![0.0], sigma: std::f64::consts::FRAC_1_SQRT_2 };
        let psi = init_gaussian(&g, &sys, &pk).unwrap();
        let prop = Propagator::new(&g, &sys).unwrap();
        let out = prop.evolve(&psi, 1e-3, 1000).unwrap();
        // only the global phase exp(-i t/2) may change
        let ov = psi.inner(&out).unwrap();
        assert!((ov.norm() - 1.0).abs() < 1e-6, "{ov}");
        assert!((ov.arg() + 0.5).abs() < 1e-5, "{ov}");
    }

    #[test]
    fn stream_matches_direct_evolution() {
        let g = GridSpec::square(32, 4.0).unwrap();
        let sys = SystemConfig::default();
        let prop = Propagator::new(&g, &sys).unwrap();
        let psi = random_field(&g, 3);
        let fields: Vec<_> = prop.stream(&psi, 0.01, 4).unwrap().collect();
        assert_eq!(fields.len(), 5);
        let direct = prop.evolve(&psi, 0.01, 4).unwrap();
        assert!(max_diff(&fields[4], &direct) < 1e-12);
        assert!((fields[3].time() - 0.03).abs() < 1e-15);

        let hs = sys.with_potential(Potential::Harmonic { omega: vec![1.0, 2.0] });
        let hp = Propagator::new(&g, &hs).unwrap();
        let fields: Vec<_> = hp.stream(&psi, 0.01, 3).unwrap().collect();
        let direct = hp.evolve(&psi, 0.01, 3).unwrap();
        assert!(max_diff(&fields[3], &direct) < 1e-12);
    }

    #[test]
    fn nyquist_phase() {
        let g = GridSpec::line(16, 2.0 * std::f64::consts::PI).unwrap();
        let p = Propagator::new(&g, &SystemConfig::default()).unwrap();
        assert!((p.nyquist_phase(0.01) - 0.5 * 64.0 * 0.01).abs() < 1e-12);
    }

    #[test]
    fn evolve_rejects_bad_input() {
        let g = GridSpec::line(16, 1.0).unwrap();
        let p = Propagator::new(&g, &SystemConfig::default()).unwrap();
        let psi = random_field(&g, 2);
        assert!(p.evolve(&psi, 0.0, 1).is_err());
        assert!(p.evolve(&psi, -1.0, 1).is_err());
        let other = random_field(&GridSpec::line(32, 1.0).unwrap(), 2);
        assert!(matches!(p.evolve(&other, 0.1, 1), Err(Error::GridMismatch(_))));
    }
}
