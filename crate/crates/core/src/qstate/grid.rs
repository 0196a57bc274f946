use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A position in the box. One-dimensional grids use only the first component.
pub type Point = [f64; 2];

/// Uniform periodic grid on the box `[-L/2, L/2)` per axis.
///
/// Grid point `i` sits at `-L/2 + i*dx` and owns the cell
/// `[x_i - dx/2, x_i + dx/2)`. Amplitudes are stored with the x index running
/// fastest: `index = iy * nx + ix`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    points: Vec<usize>,
    extent: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    points: Vec<usize>,
    extent: Vec<f64>,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;
    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(&raw.points, &raw.extent)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid { points: g.points, extent: g.extent }
    }
}

pub const MIN_POINTS: usize = 16;

impl GridSpec {
    pub fn new(points: &[usize], extent: &[f64]) -> Result<Self> {
        if points.is_empty() || points.len() > 2 {
            return Err(Error::invalid(format!("grid must have 1 or 2 axes, got {}", points.len())));
        }
        if points.len() != extent.len() {
            return Err(Error::invalid("grid points and extent have different lengths"));
        }
        for (axis, (&n, &l)) in points.iter().zip(extent).enumerate() {
            if n < MIN_POINTS || !n.is_power_of_two() {
                return Err(Error::invalid(format!(
                    "axis {axis}: point count {n} must be a power of two >= {MIN_POINTS}"
                )));
            }
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!("axis {axis}: extent {l} must be positive")));
            }
        }
        Ok(GridSpec { points: points.to_vec(), extent: extent.to_vec() })
    }

    pub fn line(points: usize, extent: f64) -> Result<Self> {
        Self::new(&[points], &[extent])
    }

    pub fn square(points: usize, extent: f64) -> Result<Self> {
        Self::new(&[points, points], &[extent, extent])
    }

    pub fn dims(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn nx(&self) -> usize {
        self.points[0]
    }

    /// Number of points along y; 1 for a line.
    pub fn ny(&self) -> usize {
        self.points.get(1).copied().unwrap_or(1)
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dims()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dims()).map(|a| self.spacing(a)).product()
    }

    /// Coordinate of grid point `i` on `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        -0.5 * self.extent[axis] + i as f64 * self.spacing(axis)
    }

    /// Axis indices of a flat index.
    pub fn unravel(&self, index: usize) -> (usize, usize) {
        let nx = self.nx();
        (index % nx, index / nx)
    }

    pub fn flat(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx() + ix
    }

    /// Position of the grid point with flat index `index`.
    pub fn position(&self, index: usize) -> Point {
        let (ix, iy) = self.unravel(index);
        if self.dims() == 1 {
            [self.coord(0, ix), 0.0]
        } else {
            [self.coord(0, ix), self.coord(1, iy)]
        }
    }

    /// Wrap a coordinate into `[-L/2, L/2)`.
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let l = self.extent[axis];
        if x >= -0.5 * l && x < 0.5 * l {
            return x;
        }
        let y = (x + 0.5 * l).rem_euclid(l) - 0.5 * l;
        // rem_euclid can round up to exactly l
        if y >= 0.5 * l {
            -0.5 * l
        } else {
            y
        }
    }

    pub fn wrap_point(&self, p: Point) -> Point {
        let mut q = p;
        for (axis, c) in q.iter_mut().enumerate().take(self.dims()) {
            *c = self.wrap(axis, *c);
        }
        q
    }

    /// True when the (finite) coordinate lies in `[-L/2, L/2)` on every axis.
    pub fn contains(&self, p: Point) -> bool {
        (0..self.dims()).all(|a| {
            let h = 0.5 * self.extent[a];
            p[a].is_finite() && p[a] >= -h && p[a] < h
        })
    }

    /// Index of the grid point nearest to `x` on `axis`, periodic.
    pub fn nearest_index(&self, axis: usize, x: f64) -> usize {
        let n = self.points[axis] as i64;
        let f = (x + 0.5 * self.extent[axis]) / self.spacing(axis);
        ((f + 0.5).floor() as i64).rem_euclid(n) as usize
    }

    /// Flat index of the cell containing `p` (nearest grid point, periodic).
    pub fn cell_of(&self, p: Point) -> usize {
        let ix = self.nearest_index(0, p[0]);
        let iy = if self.dims() == 2 { self.nearest_index(1, p[1]) } else { 0 };
        self.flat(ix, iy)
    }

    /// Angular wavenumbers in FFT order for `axis`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis];
        let dk = 2.0 * PI / self.extent[axis];
        (0..n)
            .map(|i| {
                let m = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
                m * dk
            })
            .collect()
    }

    /// Largest representable wavenumber on `axis`.
    pub fn nyquist(&self, axis: usize) -> f64 {
        PI / self.spacing(axis)
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::line(15, 1.0).is_err());
        assert!(GridSpec::line(24, 1.0).is_err());
        assert!(GridSpec::line(32, 0.0).is_err());
        assert!(GridSpec::new(&[16, 16, 16], &[1.0, 1.0, 1.0]).is_err());
        assert!(GridSpec::new(&[16, 16], &[1.0]).is_err());
    }

    #[test]
    fn coordinates_and_cells() {
        let g = GridSpec::square(16, 8.0).unwrap();
        assert_eq!(g.spacing(0), 0.5);
        assert_eq!(g.coord(0, 0), -4.0);
        assert_eq!(g.coord(1, 8), 0.0);
        assert_eq!(g.cell_of([0.0, 0.0]), g.flat(8, 8));
        // cell of point i is [x_i - dx/2, x_i + dx/2)
        assert_eq!(g.cell_of([0.24, -0.25]), g.flat(8, 8));
        assert_eq!(g.cell_of([0.25, 0.0]), g.flat(9, 8));
        // periodic
        assert_eq!(g.cell_of([3.9, 0.0]), g.flat(0, 8));
        assert_eq!(g.wrap(0, 4.0), -4.0);
        assert_eq!(g.wrap(0, -4.5), 3.5);
    }

    #[test]
    fn wavenumbers_are_fft_ordered() {
        let g = GridSpec::line(16, 2.0 * PI).unwrap();
        let k = g.wavenumbers(0);
        assert_eq!(k[1], 1.0);
        assert_eq!(k[8], -8.0);
        assert_eq!(k[15], -1.0);
    }

    #[test]
    fn serde_validates() {
        let ok: GridSpec = serde_json::from_str(r#"{"points":[32],"extent":[4.0]}"#).unwrap();
        assert_eq!(ok.len(), 32);
        assert!(serde_json::from_str::<GridSpec>(r#"{"points":[30],"extent":[4.0]}"#).is_err());
        assert!(serde_json::from_str::<GridSpec>(r#"{"points":[32],"extent":[4.0],"x":1}"#).is_err());
    }
}
