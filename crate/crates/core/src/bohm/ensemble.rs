use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{position_density, GridSpec, Point, WaveFunction};

/// Fate of one trajectory during integration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajStatus {
    Ok,
    /// Left the box at least once and was wrapped back in.
    Escaped,
    /// Hit a node cell at the finest substep and was frozen for a step.
    NodeRescued,
}

impl TrajStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrajStatus::Ok => "ok",
            TrajStatus::Escaped => "escaped",
            TrajStatus::NodeRescued => "node-rescued",
        }
    }

    /// Node rescue dominates escape.
    pub(crate) fn merge(self, other: TrajStatus) -> TrajStatus {
        use TrajStatus::*;
        match (self, other) {
            (NodeRescued, _) | (_, NodeRescued) => NodeRescued,
            (Escaped, _) | (_, Escaped) => Escaped,
            _ => Ok,
        }
    }
}

/// Positions of a few trajectories at every stored step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensePaths {
    pub times: Vec<f64>,
    /// `positions[k][i]`: trajectory `i` at `times[k]`.
    pub positions: Vec<Vec<Point>>,
}

/// Quantum-equilibrium trajectory ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEnsemble {
    pub(crate) grid: GridSpec,
    pub(crate) seed: u64,
    pub(crate) start_time: f64,
    pub(crate) time: f64,
    pub(crate) initial: Vec<Point>,
    pub(crate) positions: Vec<Point>,
    pub(crate) record_times: Vec<f64>,
    /// `records[r][i]`: trajectory `i` at `record_times[r]`.
    pub(crate) records: Vec<Vec<Point>>,
    pub(crate) status: Vec<TrajStatus>,
    /// Sign changes of the last coordinate (y in 2D, x in 1D) per trajectory.
    pub(crate) sign_changes: Vec<u32>,
    pub(crate) dense: DensePaths,
}

impl TrajectoryEnsemble {
    /// Ensemble starting from explicit points at `time`.
    pub fn from_points(grid: &GridSpec, points: Vec<Point>, time: f64, seed: u64) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !grid.contains(*p) {
                return Err(Error::OutsideBox(format!("initial point {i} at {p:?}")));
            }
        }
        let n = points.len();
        Ok(TrajectoryEnsemble {
            grid: grid.clone(),
            seed,
            start_time: time,
            time,
            positions: points.clone(),
            initial: points,
            record_times: Vec::new(),
            records: Vec::new(),
            status: vec![TrajStatus::Ok; n],
            sign_changes: vec![0; n],
            dense: DensePaths::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Time of the initial points.
    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Time of the current positions.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn initial(&self) -> &[Point] {
        &self.initial
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn record_times(&self) -> &[f64] {
        &self.record_times
    }

    pub fn records(&self) -> &[Vec<Point>] {
        &self.records
    }

    pub fn status(&self) -> &[TrajStatus] {
        &self.status
    }

    pub fn sign_changes(&self) -> &[u32] {
        &self.sign_changes
    }

    pub fn dense(&self) -> &DensePaths {
        &self.dense
    }

    pub fn count_status(&self, s: TrajStatus) -> usize {
        self.status.iter().filter(|&&x| x == s).count()
    }

    /// Trajectories whose symmetry-axis coordinate changed sign at least once.
    pub fn crossing_count(&self, include_rescued: bool) -> usize {
        self.sign_changes
            .iter()
            .zip(&self.status)
            .filter(|(&c, &s)| c > 0 && (include_rescued || s != TrajStatus::NodeRescued))
            .count()
    }

    /// Index into `record_times` of the record taken at `t`.
    pub fn record_index(&self, t: f64) -> Option<usize> {
        self.record_times.iter().position(|&r| same_time(r, t))
    }

    /// Positions at time `t`: the initial points, a record, or the current
    /// positions.
    pub fn positions_at(&self, t: f64) -> Option<&[Point]> {
        if let Some(r) = self.record_index(t) {
            return Some(&self.records[r]);
        }
        if same_time(t, self.time) {
            return Some(&self.positions);
        }
        if same_time(t, self.start_time) {
            return Some(&self.initial);
        }
        None
    }
}

/// Time equality up to accumulated rounding of `k * dt` products.
pub(crate) fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-3)
}

/// Per-trajectory generator: the same `(seed, index)` always yields the same
/// stream regardless of how trajectories are scheduled.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draw `n` points from `|psi|^2`: a cell by inverse CDF, then a uniform
/// offset within the cell. Points are wrapped into the box.
pub fn sample_initial(psi: &WaveFunction, n: usize, seed: u64) -> Result<TrajectoryEnsemble> {
    let grid = psi.grid();
    let density = position_density(psi);
    let mut cdf = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    for d in &density {
        acc += d;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::invalid("cannot sample from a zero wavefunction"));
    }
    let dims = grid.dims();
    let points: Vec<Point> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i as u64);
            let u: f64 = rng.random::<f64>() * acc;
            // first cell whose cumulative mass exceeds u
            let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let centre = grid.position(cell);
            let mut p = [0.0; 2];
            for a in 0..dims {
                let jitter: f64 = rng.random::<f64>() - 0.5;
                p[a] = centre[a] + jitter * grid.spacing(a);
            }
            grid.wrap_point(p)
        })
        .collect();
    TrajectoryEnsemble::from_points(grid, points, psi.time(), seed)
}
