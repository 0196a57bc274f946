use super::ensemble::TrajectoryEnsemble;
use super::velocity::VelocityKernel;
use crate::error::{Error, Result};
use crate::qstate::{position_density, GridSpec, Point, SystemConfig, WaveFunction};

/// Coarse bins per axis used by [`transport_distance`].
pub const TRANSPORT_BINS: usize = 16;

/// Normalized L1 residual of `d rho/dt + div j = 0` at the middle field.
///
/// `d rho/dt` is a central difference over the three equally spaced fields,
/// `div j` is spectral. Sums run over cells above the node threshold of the
/// middle field. The denominator is the L1 norm of `d rho/dt`, floored at
/// `hbar / (m L^2)` (the slowest rate the box supports) so that stationary
/// states give a small number rather than 0/0.
pub fn continuity_residual(fields: [&WaveFunction; 3], sys: &SystemConfig, eps_node_rel: f64) -> Result<f64> {
    let [prev, mid, next] = fields;
    let grid = mid.grid();
    grid.ensure_same(prev.grid())?;
    grid.ensure_same(next.grid())?;
    let h1 = mid.time() - prev.time();
    let h2 = next.time() - mid.time();
    if !(h1 > 0.0 && h2 > 0.0) || (h1 - h2).abs() > 1e-9 * h1 {
        return Err(Error::invalid(format!(
            "continuity residual needs three equally spaced fields, got spacings {h1} and {h2}"
        )));
    }
    let kernel = VelocityKernel::new(grid, sys, eps_node_rel)?;
    let j = kernel.current(mid)?;
    let mut div = vec![0.0; grid.len()];
    for axis in 0..grid.dims() {
        let comp: Vec<f64> = j.iter().map(|v| v[axis]).collect();
        for (d, x) in div.iter_mut().zip(kernel.derivative_real(&comp, axis)) {
            *d += x;
        }
    }
    let r0 = position_density(prev);
    let r1 = position_density(mid);
    let r2 = position_density(next);
    let thr = kernel.node_threshold(mid);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..grid.len() {
        if !(r1[i] >= thr) {
            continue;
        }
        let dt_rho = (r2[i] - r0[i]) / (h1 + h2);
        num += (dt_rho + div[i]).abs();
        den += dt_rho.abs();
    }
    let dv = grid.cell_volume();
    let lmax = grid.extent().iter().cloned().fold(0.0, f64::max);
    let floor = sys.hbar / (sys.mass * lmax * lmax);
    Ok(num * dv / (den * dv).max(floor))
}

fn bin_of(grid: &GridSpec, cell: usize) -> usize {
    let (ix, iy) = grid.unravel(cell);
    let bx = ix * TRANSPORT_BINS / grid.nx();
    if grid.dims() == 1 {
        bx
    } else {
        bx + TRANSPORT_BINS * (iy * TRANSPORT_BINS / grid.ny())
    }
}

/// Total-variation distance between the histogram of `points` and the
/// binned density of `psi`, on 16 bins per axis aligned with grid cells.
pub fn transport_distance(points: &[Point], psi: &WaveFunction) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyEnsemble("no points to histogram".into()));
    }
    let grid = psi.grid();
    let nbins = TRANSPORT_BINS.pow(grid.dims() as u32);
    let mut hist = vec![0.0; nbins];
    for p in points {
        hist[bin_of(grid, grid.cell_of(*p))] += 1.0;
    }
    let mut dens = vec![0.0; nbins];
    for (i, d) in position_density(psi).into_iter().enumerate() {
        dens[bin_of(grid, i)] += d;
    }
    let hn: f64 = hist.iter().sum();
    let dn: f64 = dens.iter().sum();
    Ok(0.5 * hist.iter().zip(&dens).map(|(h, d)| (h / hn - d / dn).abs()).sum::<f64>())
}

/// [`transport_distance`] for the ensemble positions at the time of `psi`.
pub fn transport_check(ens: &TrajectoryEnsemble, psi: &WaveFunction) -> Result<f64> {
    ens.grid().ensure_same(psi.grid())?;
    let pts = ens
        .positions_at(psi.time())
        .ok_or_else(|| Error::invalid(format!("ensemble holds no positions at t = {}", psi.time())))?;
    transport_distance(pts, psi)
}

/// One-sample Kolmogorov–Smirnov distance between the marginal of `points`
/// along `axis` and the marginal of `|psi|^2`, whose CDF is piecewise linear
/// within cells (matching the sampler's uniform jitter).
pub fn ks_marginal(points: &[Point], psi: &WaveFunction, axis: usize) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyEnsemble("no points for the KS statistic".into()));
    }
    let grid = psi.grid();
    if axis >= grid.dims() {
        return Err(Error::invalid(format!("axis {axis} out of range")));
    }
    let n = grid.points()[axis];
    let dx = grid.spacing(axis);
    let l = grid.extent()[axis];
    let mut m = vec![0.0; n];
    for (i, d) in position_density(psi).into_iter().enumerate() {
        let (ix, iy) = grid.unravel(i);
        m[if axis == 0 { ix } else { iy }] += d;
    }
    let total: f64 = m.iter().sum();
    let mut cdf = Vec::with_capacity(n + 1);
    cdf.push(0.0);
    for v in &m {
        cdf.push(cdf.last().unwrap() + v / total);
    }
    // coordinate in which cell i covers [i dx, (i+1) dx)
    let shifted = |x: f64| (x + 0.5 * l + 0.5 * dx).rem_euclid(l);
    let mut s: Vec<f64> = points.iter().map(|p| shifted(p[axis])).collect();
    s.sort_by(f64::total_cmp);
    let cnt = s.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in s.iter().enumerate() {
        let c = ((x / dx).floor() as usize).min(n - 1);
        let f = cdf[c] + (cdf[c + 1] - cdf[c]) * (x / dx - c as f64);
        d = d.max((f - k as f64 / cnt).abs()).max((f - (k + 1) as f64 / cnt).abs());
    }
    Ok(d)
}
