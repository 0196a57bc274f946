//! Trajectory integration alongside a stream of wavefunctions.
//!
//! Between consecutive fields at `t_n` and `t_n + dt` the current and density
//! are interpolated linearly in time and, per [`Interpolation`], in space; the
//! velocity is their ratio. One classical RK4 step is taken per propagator step. A step whose stages would move
//! farther than `cfl` grid spacings, or land in a node cell, is retried as four
//! quarter steps, recursively up to `max_refine` times. If a node cell still
//! cannot be avoided at the finest level the trajectory stays where it was for
//! that propagator step and is marked node-rescued.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{same_time, TrajStatus, TrajectoryEnsemble};
use super::velocity::{flux_velocity, Interpolation, VelocityField, VelocityKernel, DEFAULT_EPS_NODE_REL};
use crate::error::{Error, Result};
use crate::qstate::{Point, SystemConfig, WaveFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvanceOptions {
    /// Node threshold relative to the peak density of each field.
    pub eps_node_rel: f64,
    /// Largest stage displacement, in grid spacings, accepted without refining.
    pub cfl: f64,
    /// Levels of four-fold step subdivision.
    pub max_refine: u32,
    /// Number of leading trajectories whose positions are kept at every
    /// `dense_stride`-th step.
    pub dense_count: usize,
    pub dense_stride: usize,
    /// Spatial interpolation of the current and density.
    pub interpolation: Interpolation,
}

impl Default for AdvanceOptions {
    fn default() -> Self {
        AdvanceOptions {
            eps_node_rel: DEFAULT_EPS_NODE_REL,
            cfl: 0.5,
            max_refine: 4,
            dense_count: 0,
            dense_stride: 1,
            interpolation: Interpolation::default(),
        }
    }
}

impl AdvanceOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_node_rel.is_finite() && self.eps_node_rel > 0.0) {
            return Err(Error::invalid("eps_node_rel must be positive"));
        }
        if !(self.cfl.is_finite() && self.cfl > 0.0) {
            return Err(Error::invalid("cfl must be positive"));
        }
        if self.max_refine > 12 {
            return Err(Error::invalid("max_refine above 12 is not supported"));
        }
        if self.dense_stride == 0 {
            return Err(Error::invalid("dense_stride must be at least 1"));
        }
        Ok(())
    }
}

/// Passed to the observer each time the ensemble reaches a record time.
pub struct RecordEvent<'a> {
    pub index: usize,
    pub time: f64,
    pub psi: &'a WaveFunction,
    pub velocity: &'a VelocityField,
    pub positions: &'a [Point],
}

pub fn advance_ensemble<I>(
    ens: &TrajectoryEnsemble,
    stream: I,
    sys: &SystemConfig,
    dt: f64,
    record_times: &[f64],
    opts: &AdvanceOptions,
) -> Result<TrajectoryEnsemble>
where
    I: IntoIterator<Item = WaveFunction>,
{
    advance_ensemble_observed(ens, stream, sys, dt, record_times, opts, |_| Ok(()))
}

/// Step index of every record time; each must sit on the `dt` lattice.
fn record_steps(t0: f64, dt: f64, record_times: &[f64]) -> Result<Vec<usize>> {
    let mut steps = Vec::with_capacity(record_times.len());
    let mut prev: Option<f64> = None;
    for &t in record_times {
        if !t.is_finite() || t < t0 {
            return Err(Error::invalid(format!("record time {t} precedes the ensemble time {t0}")));
        }
        if let Some(p) = prev {
            if t <= p {
                return Err(Error::invalid("record times must be strictly increasing"));
            }
        }
        prev = Some(t);
        let k = (t - t0) / dt;
        let kr = k.round();
        if (k - kr).abs() > 1e-6 {
            return Err(Error::invalid(format!("record time {t} is not a multiple of the step {dt} after {t0}")));
        }
        steps.push(kr as usize);
    }
    Ok(steps)
}

pub fn advance_ensemble_observed<I, F>(
    ens: &TrajectoryEnsemble,
    stream: I,
    sys: &SystemConfig,
    dt: f64,
    record_times: &[f64],
    opts: &AdvanceOptions,
    mut observer: F,
) -> Result<TrajectoryEnsemble>
where
    I: IntoIterator<Item = WaveFunction>,
    F: FnMut(RecordEvent<'_>) -> Result<()>,
{
    opts.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let t0 = ens.time;
    let steps = record_steps(t0, dt, record_times)?;
    let grid = ens.grid.clone();
    let kernel = VelocityKernel::new(&grid, sys, opts.eps_node_rel)?.with_interpolation(opts.interpolation);
    let mut out = ens.clone();
    out.record_times = record_times.to_vec();
    out.records = Vec::with_capacity(record_times.len());
    let dense_n = opts.dense_count.min(out.len());
    let last_step = match steps.last() {
        Some(&s) => s,
        None => return Ok(out),
    };

    let mut fields = stream.into_iter();
    let first = fields.next().ok_or_else(|| Error::StreamGap("stream is empty".into()))?;
    grid.ensure_same(first.grid())?;
    if !same_time(first.time(), t0) {
        return Err(Error::StreamGap(format!("stream starts at {} but the ensemble is at {t0}", first.time())));
    }
    let mut psi0 = first;
    let mut v0 = kernel.field(&psi0)?;
    let mut next_record = 0;
    let axis = grid.dims() - 1;
    let stepper = Stepper { dt, cfl_len: opts.cfl * grid.min_spacing(), max_refine: opts.max_refine };

    let mut step = 0usize;
    loop {
        while next_record < steps.len() && steps[next_record] == step {
            out.records.push(out.positions.clone());
            observer(RecordEvent {
                index: next_record,
                time: record_times[next_record],
                psi: &psi0,
                velocity: &v0,
                positions: &out.positions,
            })?;
            next_record += 1;
        }
        if dense_n > 0 && step.is_multiple_of(opts.dense_stride) {
            out.dense.times.push(psi0.time());
            out.dense.positions.push(out.positions[..dense_n].to_vec());
        }
        if step == last_step {
            break;
        }
        let psi1 = fields.next().ok_or_else(|| {
            Error::StreamGap(format!(
                "stream ended at t = {} before t = {}",
                psi0.time(),
                record_times[steps.len() - 1]
            ))
        })?;
        grid.ensure_same(psi1.grid())?;
        let expected = t0 + (step + 1) as f64 * dt;
        if !same_time(psi1.time(), expected) {
            return Err(Error::StreamGap(format!("expected a field at t = {expected}, got t = {}", psi1.time())));
        }
        let v1 = kernel.field(&psi1)?;
        let grid_ref = &grid;
        let results: Vec<(Point, TrajStatus, bool)> = out
            .positions
            .par_iter()
            .map(|&p| {
                let (q, rescued) = stepper.advance(p, &v0, &v1);
                let mut status = if rescued { TrajStatus::NodeRescued } else { TrajStatus::Ok };
                let inside = grid_ref.contains(q);
                let wrapped = if inside { q } else { grid_ref.wrap_point(q) };
                if !inside {
                    status = status.merge(TrajStatus::Escaped);
                }
                let flipped = (p[axis] < 0.0) != (wrapped[axis] < 0.0);
                (wrapped, status, flipped)
            })
            .collect();
        for (i, (q, s, flipped)) in results.into_iter().enumerate() {
            out.positions[i] = q;
            out.status[i] = out.status[i].merge(s);
            out.sign_changes[i] += flipped as u32;
        }
        psi0 = psi1;
        v0 = v1;
        step += 1;
        out.time = t0 + step as f64 * dt;
    }
    out.time = record_times[steps.len() - 1];
    Ok(out)
}

struct Stepper {
    dt: f64,
    cfl_len: f64,
    max_refine: u32,
}

struct NodeHit;

impl Stepper {
    /// One propagator step; returns the new position and whether the
    /// trajectory had to be frozen at a node.
    fn advance(&self, p: Point, v0: &VelocityField, v1: &VelocityField) -> (Point, bool) {
        match self.sub(p, 0.0, 1.0, 0, v0, v1) {
            Ok(q) => (q, false),
            Err(NodeHit) => (p, true),
        }
    }

    #[inline]
    fn velocity(s: f64, p: Point, v0: &VelocityField, v1: &VelocityField) -> [f64; 2] {
        let a = v0.sample_flux(p);
        let b = v1.sample_flux(p);
        flux_velocity([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])])
    }

    fn sub(
        &self,
        p: Point,
        a: f64,
        b: f64,
        depth: u32,
        v0: &VelocityField,
        v1: &VelocityField,
    ) -> Result<Point, NodeHit> {
        let h = (b - a) * self.dt;
        let m = 0.5 * (a + b);
        let node = |x: Point| v0.is_node(x) || v1.is_node(x);
        let k1 = Self::velocity(a, p, v0, v1);
        let x2 = [p[0] + 0.5 * h * k1[0], p[1] + 0.5 * h * k1[1]];
        let k2 = Self::velocity(m, x2, v0, v1);
        let x3 = [p[0] + 0.5 * h * k2[0], p[1] + 0.5 * h * k2[1]];
        let k3 = Self::velocity(m, x3, v0, v1);
        let x4 = [p[0] + h * k3[0], p[1] + h * k3[1]];
        let k4 = Self::velocity(b, x4, v0, v1);
        let hit = node(p) || node(x2) || node(x3) || node(x4);
        let speed = [k1, k2, k3, k4].iter().map(|k| k[0].hypot(k[1])).fold(0.0, f64::max);
        let fast = speed * h > self.cfl_len;
        if hit || fast {
            if depth < self.max_refine {
                let mut q = p;
                let w = 0.25 * (b - a);
                for j in 0..4 {
                    let lo = a + j as f64 * w;
                    let hi = if j == 3 { b } else { lo + w };
                    q = self.sub(q, lo, hi, depth + 1, v0, v1)?;
                }
                return Ok(q);
            }
            if hit {
                return Err(NodeHit);
            }
        }
        Ok([
            p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bohm::ensemble::sample_initial;
    use crate::qstate::{init_gaussian, GaussianPacket, GridSpec, Propagator};
    use num_complex::Complex64;

    fn line_setup(n: usize, l: f64) -> (GridSpec, SystemConfig) {
        (GridSpec::line(n, l).unwrap(), SystemConfig::default())
    }

    #[test]
    fn uniform_state_does_not_move() {
        let (g, sys) = line_setup(64, 8.0);
        let amp = Complex64::new((1.0 / 8.0f64).sqrt(), 0.0);
        let psi = WaveFunction::from_parts(g.clone(), vec![amp; 64], 0.0).unwrap();
        let prop = Propagator::new(&g, &sys).unwrap();
        let ens = sample_initial(&psi, 200, 5).unwrap();
        let out = advance_ensemble(
            &ens,
            prop.stream(&psi, 0.05, 20).unwrap(),
            &sys,
            0.05,
            &[0.5, 1.0],
            &AdvanceOptions::default(),
        )
        .unwrap();
        assert_eq!(out.records().len(), 2);
        for (a, b) in ens.initial().iter().zip(&out.records()[1]) {
            assert!((a[0] - b[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn moving_packet_translates_trajectories() {
        let (g, sys) = line_setup(256, 32.0);
        let pk = GaussianPacket { center: vec![-4.0], momentum: vec![2.0], sigma: 1.0 };
        let psi = init_gaussian(&g, &sys, &pk).unwrap();
        let prop = Propagator::new(&g, &sys).unwrap();
        let ens = TrajectoryEnsemble::from_points(&g, vec![[-4.0, 0.0]], 0.0, 0).unwrap();
        let out = advance_ensemble(
            &ens,
            prop.stream(&psi, 0.01, 200).unwrap(),
            &sys,
            0.01,
            &[2.0],
            &AdvanceOptions::default(),
        )
        .unwrap();
        // centre trajectory of a spreading packet moves with the group velocity
        let x = out.records()[0][0][0];
        assert!((x - 0.0).abs() < 1e-4, "{x}");
        assert_eq!(out.status()[0], TrajStatus::Ok);
    }

    #[test]
    fn stream_gaps_are_reported() {
        let (g, sys) = line_setup(64, 8.0);
        let pk = GaussianPacket { center: vec![0.0], momentum: vec![0.0], sigma: 0.5 };
        let psi = init_gaussian(&g, &sys, &pk).unwrap();
        let prop = Propagator::new(&g, &sys).unwrap();
        let ens = sample_initial(&psi, 10, 1).unwrap();
        let opts = AdvanceOptions::default();
        // too short
        let e = advance_ensemble(&ens, prop.stream(&psi, 0.01, 3).unwrap(), &sys, 0.01, &[0.05], &opts);
        assert!(matches!(e, Err(Error::StreamGap(_))));
        // skipped field
        let skipping = prop.stream(&psi, 0.01, 10).unwrap().enumerate().filter(|(i, _)| *i != 2).map(|(_, f)| f);
        let e = advance_ensemble(&ens, skipping, &sys, 0.01, &[0.05], &opts);
        assert!(matches!(e, Err(Error::StreamGap(_))));
        // off-lattice record time
        let e = advance_ensemble(&ens, prop.stream(&psi, 0.01, 10).unwrap(), &sys, 0.01, &[0.015], &opts);
        assert!(matches!(e, Err(Error::Invalid(_))));
    }

    #[test]
    fn wrapped_trajectories_are_marked_escaped() {
        let (g, sys) = line_setup(128, 16.0);
        let pk = GaussianPacket { center: vec![2.0], momentum: vec![10.0], sigma: 1.0 };
        let psi = init_gaussian(&g, &sys, &pk).unwrap();
        let prop = Propagator::new(&g, &sys).unwrap();
        let ens = TrajectoryEnsemble::from_points(&g, vec![[2.0, 0.0]], 0.0, 0).unwrap();
        let out = advance_ensemble(
            &ens,
            prop.stream(&psi, 0.01, 100).unwrap(),
            &sys,
            0.01,
            &[1.0],
            &AdvanceOptions::default(),
        )
        .unwrap();
        assert_eq!(out.status()[0], TrajStatus::Escaped);
        assert!(g.contains(out.positions()[0]));
        // 2 + 10 = 12 wraps to -4
        assert!((out.positions()[0][0] + 4.0).abs() < 1e-3, "{:?}", out.positions()[0]);
    }

    #[test]
    fn observer_sees_every_record_in_order() {
        let (g, sys) = line_setup(64, 8.0);
        let pk = GaussianPacket { center: vec![0.0], momentum: vec![1.0], sigma: 0.5 };
        let psi = init_gaussian(&g, &sys, &pk).unwrap();
        let prop = Propagator::new(&g, &sys).unwrap();
        let ens = sample_initial(&psi, 20, 2).unwrap();
        let mut seen = Vec::new();
        let out = advance_ensemble_observed(
            &ens,
            prop.stream(&psi, 0.01, 100).unwrap(),
            &sys,
            0.01,
            &[0.0, 0.03, 0.1],
            &AdvanceOptions { dense_count: 3, dense_stride: 2, ..Default::default() },
            |ev| {
                seen.push((ev.index, ev.time, ev.psi.time()));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen.len(), 3);
        for (i, t, pt) in seen {
            assert!((t - pt).abs() < 1e-12, "record {i}");
        }
        assert_eq!(out.dense().times.len(), 6);
        assert_eq!(out.dense().positions[0].len(), 3);
        assert_eq!(out.records()[0], ens.initial());
    }
}
