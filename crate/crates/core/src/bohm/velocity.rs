use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::qstate::fft::GridFft;
use crate::qstate::{GridSpec, Point, SystemConfig, WaveFunction};

/// Default node threshold relative to the peak density.
pub const DEFAULT_EPS_NODE_REL: f64 = 1e-12;

/// How the current and density are interpolated between grid points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// (Bi)linear on the 2 (2x2) surrounding points.
    #[default]
    Linear,
    /// Four-point Lagrange cubic per axis, on 4 (4x4) points.
    Cubic,
}

/// Guidance velocity `(hbar/m) Im(grad psi / psi)` on the grid.
///
/// Cells whose density falls below the node threshold are flagged and carry
/// zero velocity. Off the grid points the velocity is the ratio of the
/// interpolated current and density, which stay smooth where `v` does not.
#[derive(Clone, Debug)]
pub struct VelocityField {
    grid: GridSpec,
    time: f64,
    v: Vec<[f64; 2]>,
    /// `[j_x, j_y, rho]` per grid point.
    flux: Vec<[f64; 3]>,
    interp: Interpolation,
    flagged: Vec<bool>,
    threshold: f64,
}

impl VelocityField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.v
    }

    pub fn flags(&self) -> &[bool] {
        &self.flagged
    }

    /// Absolute density threshold used for flagging.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    /// Largest speed over unflagged cells.
    pub fn max_speed(&self) -> f64 {
        self.v.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max)
    }

    /// True when the cell containing `p` is flagged.
    #[inline]
    pub fn is_node(&self, p: Point) -> bool {
        self.flagged[self.grid.cell_of(p)]
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    /// Current and density `[j_x, j_y, rho]` at `p`, interpolated between
    /// grid points and periodic in every axis.
    #[inline]
    pub fn sample_flux(&self, p: Point) -> [f64; 3] {
        match self.interp {
            Interpolation::Linear => self.stencil::<2>(p, |t| [1.0 - t, t]),
            Interpolation::Cubic => self.stencil::<4>(p, |t| {
                let (a, b, c) = (t + 1.0, t - 1.0, t - 2.0);
                [-t * b * c / 6.0, a * b * c / 2.0, -a * t * c / 2.0, a * t * b / 6.0]
            }),
        }
    }

    /// Tensor-product stencil of `N` points per axis, starting `N/2 - 1`
    /// points below the cell corner at or below `p`.
    #[inline]
    fn stencil<const N: usize>(&self, p: Point, weights: impl Fn(f64) -> [f64; N]) -> [f64; 3] {
        let g = &self.grid;
        let back = (N / 2 - 1) as i64;
        let axis = |a: usize| {
            let n = g.points()[a] as i64;
            let f = (p[a] + 0.5 * g.extent()[a]) / g.spacing(a);
            let i = f.floor();
            let idx: [usize; N] = std::array::from_fn(|k| (i as i64 - back + k as i64).rem_euclid(n) as usize);
            (idx, weights(f - i))
        };
        let (ix, wx) = axis(0);
        let mut out = [0.0; 3];
        let mut row = |base: usize, w: f64| {
            for k in 0..N {
                let f = &self.flux[base + ix[k]];
                let c = w * wx[k];
                out[0] += c * f[0];
                out[1] += c * f[1];
                out[2] += c * f[2];
            }
        };
        if g.dims() == 1 {
            row(0, 1.0);
        } else {
            let nx = g.nx();
            let (iy, wy) = axis(1);
            for k in 0..N {
                row(iy[k] * nx, wy[k]);
            }
        }
        out
    }

    /// Velocity at `p`; zero where the interpolated density vanishes.
    #[inline]
    pub fn sample(&self, p: Point) -> [f64; 2] {
        flux_velocity(self.sample_flux(p))
    }
}

/// `j / rho`, or zero when `rho` is not positive.
#[inline]
pub fn flux_velocity(f: [f64; 3]) -> [f64; 2] {
    if f[2] > 0.0 {
        [f[0] / f[2], f[1] / f[2]]
    } else {
        [0.0; 2]
    }
}

/// Reusable spectral-gradient machinery for one grid and system.
#[derive(Clone, Debug)]
pub struct VelocityKernel {
    grid: GridSpec,
    sys: SystemConfig,
    fft: GridFft,
    /// Wavenumbers per axis with the Nyquist mode zeroed, so that real and
    /// mirror-symmetric fields keep their symmetry under differentiation.
    k: Vec<Vec<f64>>,
    eps_rel: f64,
    interp: Interpolation,
}

impl VelocityKernel {
    pub fn new(grid: &GridSpec, sys: &SystemConfig, eps_rel: f64) -> Result<Self> {
        sys.validate(grid)?;
        if !(eps_rel.is_finite() && eps_rel > 0.0) {
            return Err(crate::Error::invalid(format!("node threshold must be positive, got {eps_rel}")));
        }
        let k = (0..grid.dims())
            .map(|a| {
                let mut k = grid.wavenumbers(a);
                k[grid.points()[a] / 2] = 0.0;
                k
            })
            .collect();
        Ok(VelocityKernel {
            grid: grid.clone(),
            sys: sys.clone(),
            fft: GridFft::new(grid),
            k,
            eps_rel,
            interp: Interpolation::default(),
        })
    }

    pub fn eps_rel(&self) -> f64 {
        self.eps_rel
    }

    /// Interpolation used by the fields this kernel produces.
    pub fn with_interpolation(mut self, interp: Interpolation) -> Self {
        self.interp = interp;
        self
    }

    /// Spectral gradient of `psi`, one complex field per axis.
    pub fn gradient(&self, psi: &WaveFunction) -> Result<Vec<Vec<Complex64>>> {
        self.grid.ensure_same(psi.grid())?;
        let mut spec = psi.amplitudes().to_vec();
        self.fft.forward(&mut spec);
        Ok((0..self.grid.dims()).map(|a| self.derivative(&spec, a)).collect())
    }

    fn derivative(&self, spec: &[Complex64], axis: usize) -> Vec<Complex64> {
        let nx = self.grid.nx();
        let k = &self.k[axis];
        let mut d: Vec<Complex64> = spec
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let kk = if axis == 0 { k[i % nx] } else { k[i / nx] };
                z * Complex64::new(0.0, kk)
            })
            .collect();
        self.fft.inverse(&mut d);
        d
    }

    /// Spectral derivative of a real field along `axis`.
    pub fn derivative_real(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let mut spec: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut spec);
        self.derivative(&spec, axis).into_iter().map(|z| z.re).collect()
    }

    /// Absolute node threshold for `psi`.
    pub fn node_threshold(&self, psi: &WaveFunction) -> f64 {
        let peak = psi.amplitudes().par_iter().map(|z| z.norm_sqr()).reduce(|| 0.0, f64::max);
        self.eps_rel * peak
    }

    /// Probability current `(hbar/m) Im(conj(psi) grad psi)` per cell.
    pub fn current(&self, psi: &WaveFunction) -> Result<Vec<[f64; 2]>> {
        let grad = self.gradient(psi)?;
        let c = self.sys.hbar / self.sys.mass;
        Ok(psi
            .amplitudes()
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let mut j = [0.0; 2];
                for (a, g) in grad.iter().enumerate() {
                    j[a] = c * (z.conj() * g[i]).im;
                }
                j
            })
            .collect())
    }

    pub fn field(&self, psi: &WaveFunction) -> Result<VelocityField> {
        let grad = self.gradient(psi)?;
        let threshold = self.node_threshold(psi);
        let c = self.sys.hbar / self.sys.mass;
        let flux: Vec<[f64; 3]> = psi
            .amplitudes()
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let mut f = [0.0, 0.0, z.norm_sqr()];
                for (a, g) in grad.iter().enumerate() {
                    f[a] = c * (z.conj() * g[i]).im;
                }
                f
            })
            .collect();
        let (v, flagged) = flux
            .par_iter()
            .map(|f| if !(f[2] >= threshold) || f[2] == 0.0 { ([0.0; 2], true) } else { (flux_velocity(*f), false) })
            .unzip();
        Ok(VelocityField {
            grid: self.grid.clone(),
            time: psi.time(),
            v,
            flux,
            interp: self.interp,
            flagged,
            threshold,
        })
    }
}

/// One-shot velocity field; build a [`VelocityKernel`] when evaluating many.
pub fn velocity_field(psi: &WaveFunction, sys: &SystemConfig, eps_node_rel: f64) -> Result<VelocityField> {
    VelocityKernel::new(psi.grid(), sys, eps_node_rel)?.field(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{init_gaussian, superpose, GaussianPacket, Propagator};

    fn gaussian(g: &GridSpec, c: &[f64], p: &[f64], s: f64) -> WaveFunction {
        let pk = GaussianPacket { center: c.to_vec(), momentum: p.to_vec(), sigma: s };
        init_gaussian(g, &SystemConfig::default(), &pk).unwrap()
    }

    #[test]
    fn real_state_has_zero_velocity() {
        let g = GridSpec::square(64, 8.0).unwrap();
        let psi = gaussian(&g, &[0.5, 0.0], &[0.0, 0.0], 0.6);
        let f = velocity_field(&psi, &SystemConfig::default(), DEFAULT_EPS_NODE_REL).unwrap();
        // zero up to roundoff divided by the smallest unflagged density
        assert!(f.max_speed() < 1e-8, "{}", f.max_speed());
    }

    #[test]
    fn plane_wave_phase_gives_p_over_m() {
        let g = GridSpec::square(128, 16.0).unwrap();
        let sys = SystemConfig::free(2.0, 1.0).unwrap();
        let pk = GaussianPacket { center: vec![0.0, 0.0], momentum: vec![3.0, -1.5], sigma: 0.6 };
        let psi = init_gaussian(&g, &sys, &pk).unwrap();
        let f = velocity_field(&psi, &sys, DEFAULT_EPS_NODE_REL).unwrap();
        let mut checked = 0;
        for (v, flag) in f.values().iter().zip(f.flags()) {
            if !flag {
                assert!((v[0] - 1.5).abs() < 1e-8 && (v[1] + 0.75).abs() < 1e-8, "{v:?}");
                checked += 1;
            }
        }
        assert!(checked > 1000);
        assert!(f.flagged_count() > 0);
    }

    #[test]
    fn mirror_state_has_no_flux_through_axis() {
        let g = GridSpec::square(128, 8.0).unwrap();
        let sys = SystemConfig::default();
        let a = gaussian(&g, &[-1.0, 1.0], &[4.0, -4.0], 0.4);
        let b = gaussian(&g, &[-1.0, -1.0], &[4.0, 4.0], 0.4);
        let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let psi = superpose(&[(c, &a), (c, &b)]).unwrap().psi;
        let prop = Propagator::new(&g, &sys).unwrap();
        for t in [0.0, 0.1, 0.25] {
            let s = prop.evolve_for(&psi, t, 1.0).unwrap();
            let f = velocity_field(&s, &sys, DEFAULT_EPS_NODE_REL).unwrap();
            let iy = g.nearest_index(1, 0.0);
            let vmax = f.max_speed();
            for ix in 0..g.nx() {
                let v = f.values()[g.flat(ix, iy)];
                assert!(v[1].abs() <= 1e-10 * vmax.max(1.0), "t={t} ix={ix} vy={}", v[1]);
            }
        }
    }

    fn polynomial_field(interp: Interpolation, f: impl Fn(f64, f64) -> [f64; 3]) -> VelocityField {
        let g = GridSpec::square(32, 8.0).unwrap();
        let k = VelocityKernel::new(&g, &SystemConfig::default(), 1e-12).unwrap().with_interpolation(interp);
        let mut field = k.field(&gaussian(&g, &[0.0, 0.0], &[0.0, 0.0], 0.75)).unwrap();
        for i in 0..g.len() {
            let p = g.position(i);
            field.flux[i] = f(p[0], p[1]);
        }
        field
    }

    #[test]
    fn linear_sampling_reproduces_linear_fields() {
        let f = |x: f64, y: f64| [x + 2.0 * y, -y, 2.0 + 0.1 * x];
        let field = polynomial_field(Interpolation::Linear, f);
        let q = [0.13, -0.41];
        let want = f(q[0], q[1]);
        let got = field.sample_flux(q);
        for c in 0..3 {
            assert!((got[c] - want[c]).abs() < 1e-12, "{c}: {got:?} vs {want:?}");
        }
        let v = field.sample(q);
        assert!((v[0] - want[0] / want[2]).abs() < 1e-12 && (v[1] - want[1] / want[2]).abs() < 1e-12);
    }

    #[test]
    fn cubic_sampling_reproduces_cubic_fields() {
        let f = |x: f64, y: f64| [x * x * y - y * y * y, 0.5 * x * x * x + x * y, 3.0 + x * y * y];
        let field = polynomial_field(Interpolation::Cubic, f);
        for q in [[0.13, -0.41], [-1.7, 2.26], [0.0, 0.0]] {
            let want = f(q[0], q[1]);
            let got = field.sample_flux(q);
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() < 1e-11, "{q:?} {c}: {got:?} vs {want:?}");
            }
        }
        // the linear stencil does not
        let lin = polynomial_field(Interpolation::Linear, f);
        assert!((lin.sample_flux([0.13, -0.41])[0] - f(0.13, -0.41)[0]).abs() > 1e-4);
    }
}
