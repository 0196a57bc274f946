use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, Point};
use super::system::SystemConfig;
use crate::error::{Error, Result};

/// Norm below which a superposition counts as cancelled.
pub const CANCELLATION_FLOOR: f64 = 1e-8;

/// Complex amplitudes on a grid at a fixed time. Immutable once built.
///
/// Normalized states have `sum |psi|^2 dV = 1`; branch vectors produced by
/// projections keep their reduced norm.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    grid: GridSpec,
    amps: Vec<Complex64>,
    time: f64,
}

impl WaveFunction {
    pub fn from_parts(grid: GridSpec, amps: Vec<Complex64>, time: f64) -> Result<Self> {
        if amps.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} amplitudes for a grid of {} cells", amps.len(), grid.len())));
        }
        if !time.is_finite() {
            return Err(Error::invalid("time is not finite"));
        }
        if amps.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("amplitudes contain non-finite values"));
        }
        Ok(WaveFunction { grid, amps, time })
    }

    /// Crate-internal constructor for amplitudes known to be valid.
    pub(crate) fn new_unchecked(grid: GridSpec, amps: Vec<Complex64>, time: f64) -> Self {
        debug_assert_eq!(amps.len(), grid.len());
        WaveFunction { grid, amps, time }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.par_iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>` with the cell-volume measure.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid)?;
        let s: Complex64 = self.amps.par_iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn scaled(&self, c: Complex64) -> WaveFunction {
        let amps = self.amps.par_iter().map(|z| z * c).collect();
        WaveFunction::new_unchecked(self.grid.clone(), amps, self.time)
    }

    /// Same amplitudes relabelled with a new time.
    pub fn at_time(mut self, time: f64) -> WaveFunction {
        self.time = time;
        self
    }

    /// `<x>` per axis for a non-zero state, normalized by its own norm.
    pub fn mean_position(&self) -> Point {
        let d = position_density(self);
        let total: f64 = d.iter().sum();
        let mut m = [0.0; 2];
        for (i, w) in d.iter().enumerate() {
            let p = self.grid.position(i);
            m[0] += w * p[0];
            m[1] += w * p[1];
        }
        [m[0] / total, m[1] / total]
    }

    /// Circular mean of the density per axis, wrapped into the box. Unlike
    /// [`mean_position`](Self::mean_position) it follows a localized packet
    /// across the periodic boundary.
    pub fn periodic_mean_position(&self) -> Point {
        let d = position_density(self);
        let g = &self.grid;
        let mut acc = [[0.0f64; 2]; 2];
        for (i, w) in d.iter().enumerate() {
            let p = g.position(i);
            for a in 0..g.dims() {
                let th = std::f64::consts::TAU * p[a] / g.extent()[a];
                acc[a][0] += w * th.cos();
                acc[a][1] += w * th.sin();
            }
        }
        let mut c = [0.0; 2];
        for a in 0..g.dims() {
            c[a] = acc[a][1].atan2(acc[a][0]) * g.extent()[a] / std::f64::consts::TAU;
        }
        g.wrap_point(c)
    }
}

/// `|psi|^2` per cell; integrates to the squared norm.
pub fn position_density(psi: &WaveFunction) -> Vec<f64> {
    psi.amps.par_iter().map(|z| z.norm_sqr()).collect()
}

/// A Gaussian packet: `exp(-|x-c|^2 / 4 sigma^2 + i p.x / hbar)`, normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPacket {
    pub center: Vec<f64>,
    pub momentum: Vec<f64>,
    pub sigma: f64,
}

impl GaussianPacket {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let d = grid.dims();
        if self.center.len() != d || self.momentum.len() != d {
            return Err(Error::invalid(format!("packet center/momentum must have {d} components")));
        }
        if self.center.iter().chain(&self.momentum).any(|v| !v.is_finite()) {
            return Err(Error::invalid("packet parameters must be finite"));
        }
        for axis in 0..d {
            let h = grid.spacing(axis);
            if !(self.sigma >= 3.0 * h) {
                return Err(Error::invalid(format!(
                    "sigma {} is under-resolved: needs at least 3 grid spacings ({}) on axis {axis}",
                    self.sigma,
                    3.0 * h
                )));
            }
            let half = 0.5 * grid.extent()[axis];
            let c = self.center[axis];
            if c - 5.0 * self.sigma < -half || c + 5.0 * self.sigma > half {
                return Err(Error::invalid(format!(
                    "packet support [{}, {}] on axis {axis} is clipped by the box [{}, {}]",
                    c - 5.0 * self.sigma,
                    c + 5.0 * self.sigma,
                    -half,
                    half
                )));
            }
        }
        Ok(())
    }

    /// Largest `|p| dx / hbar` over axes; values near or above pi/2 alias.
    pub fn resolution(&self, grid: &GridSpec, hbar: f64) -> f64 {
        (0..grid.dims()).map(|a| self.momentum[a].abs() * grid.spacing(a) / hbar).fold(0.0, f64::max)
    }
}

pub fn init_gaussian(grid: &GridSpec, sys: &SystemConfig, packet: &GaussianPacket) -> Result<WaveFunction> {
    packet.validate(grid)?;
    let d = grid.dims();
    let inv4s2 = 1.0 / (4.0 * packet.sigma * packet.sigma);
    let amps: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.position(i);
            let mut r2 = 0.0;
            let mut phase = 0.0;
            for a in 0..d {
                let dx = p[a] - packet.center[a];
                r2 += dx * dx;
                phase += packet.momentum[a] * dx / sys.hbar;
            }
            Complex64::from_polar((-r2 * inv4s2).exp(), phase)
        })
        .collect();
    let psi = WaveFunction::new_unchecked(grid.clone(), amps, 0.0);
    let n = psi.norm();
    Ok(psi.scaled(Complex64::new(1.0 / n, 0.0)))
}

/// Result of [`superpose`]: the renormalized state and the norm before
/// renormalization.
#[derive(Clone, Debug)]
pub struct Superposition {
    pub psi: WaveFunction,
    pub raw_norm: f64,
}

pub fn superpose(terms: &[(Complex64, &WaveFunction)]) -> Result<Superposition> {
    let (_, first) = terms.first().ok_or_else(|| Error::invalid("no terms to superpose"))?;
    for (_, w) in &terms[1..] {
        first.grid.ensure_same(&w.grid)?;
        if w.time != first.time {
            return Err(Error::invalid(format!("terms live at different times ({} and {})", first.time, w.time)));
        }
    }
    let amps: Vec<Complex64> =
        (0..first.grid.len()).into_par_iter().map(|i| terms.iter().map(|(c, w)| c * w.amps[i]).sum()).collect();
    let sum = WaveFunction::new_unchecked(first.grid.clone(), amps, first.time);
    let raw_norm = sum.norm();
    if !(raw_norm >= CANCELLATION_FLOOR) {
        return Err(Error::Cancellation { norm: raw_norm, floor: CANCELLATION_FLOOR });
    }
    let psi = sum.scaled(Complex64::new(1.0 / raw_norm, 0.0));
    Ok(Superposition { psi, raw_norm })
}
