use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{GridSpec, Point, WaveFunction};

/// Declarative description of a region partition. Each grid cell is labelled
/// by the position of its grid point; region edges are lower-inclusive and
/// upper-exclusive on every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionSpec {
    /// One region covering the box.
    Whole,
    /// Squares (intervals in 1D) `[origin + k side, origin + (k+1) side)`.
    /// When the box length is a whole number of sides the tiling is periodic
    /// and the squares cut by the box edge are joined with their images.
    /// Regions are named by their tile indices, e.g. `-3:2`.
    SquareTiling {
        side: f64,
        #[serde(default)]
        origin: Option<Vec<f64>>,
    },
    /// `lo` below `at` on `axis`, `hi` from `at` up.
    HalfPlane { axis: usize, at: f64 },
    /// Explicit boxes that must cover every cell exactly once.
    Boxes { regions: Vec<BoxRegion> },
    /// A label per cell (storage order) into `names`.
    Cells { names: Vec<String>, labels: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRegion {
    pub name: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Exhaustive, exclusive labelling of grid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPartition {
    grid: GridSpec,
    labels: Vec<u32>,
    names: Vec<String>,
}

impl RegionPartition {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, label: u32) -> &str {
        &self.names[label as usize]
    }

    pub fn label_by_name(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }

    /// Label per cell in storage order.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_of_cell(&self, cell: usize) -> u32 {
        self.labels[cell]
    }

    /// Label of the cell containing `p`.
    pub fn label_of_point(&self, p: Point) -> Result<u32> {
        if !self.grid.contains(p) {
            return Err(Error::OutsideBox(format!("{p:?}")));
        }
        Ok(self.labels[self.grid.cell_of(p)])
    }

    pub fn cells_per_label(&self) -> Vec<usize> {
        let mut c = vec![0; self.count()];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }

    /// Cell indices of every region, in storage order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.count()];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l as usize].push(i);
        }
        m
    }

    /// Centre of each region as a periodic (circular) mean of its grid
    /// points, so a tile split by the box edge gets the centre of its
    /// unwrapped image. The result is wrapped into the box.
    pub fn centroids(&self) -> Vec<Point> {
        let g = &self.grid;
        let mut acc = vec![[[0.0f64; 2]; 2]; self.count()];
        for (i, &l) in self.labels.iter().enumerate() {
            let p = g.position(i);
            for a in 0..g.dims() {
                let th = std::f64::consts::TAU * p[a] / g.extent()[a];
                acc[l as usize][a][0] += th.cos();
                acc[l as usize][a][1] += th.sin();
            }
        }
        acc.iter()
            .map(|s| {
                let mut c = [0.0; 2];
                for a in 0..g.dims() {
                    let th = s[a][1].atan2(s[a][0]);
                    c[a] = th * g.extent()[a] / std::f64::consts::TAU;
                }
                g.wrap_point(c)
            })
            .collect()
    }

    /// `sum |psi|^2 dV` per region.
    pub fn weights(&self, psi: &WaveFunction) -> Result<Vec<f64>> {
        self.grid.ensure_same(psi.grid())?;
        let mut w = vec![0.0; self.count()];
        for (z, &l) in psi.amplitudes().iter().zip(&self.labels) {
            w[l as usize] += z.norm_sqr();
        }
        let dv = self.grid.cell_volume();
        w.iter_mut().for_each(|x| *x *= dv);
        Ok(w)
    }
}

/// Apply the region projector: amplitudes outside `label` become zero.
pub fn project(psi: &WaveFunction, part: &RegionPartition, label: u32) -> Result<WaveFunction> {
    part.grid.ensure_same(psi.grid())?;
    if label as usize >= part.count() {
        return Err(Error::invalid(format!("label {label} out of range for {} regions", part.count())));
    }
    let amps = psi
        .amplitudes()
        .par_iter()
        .zip(&part.labels)
        .map(|(z, &l)| if l == label { *z } else { Complex64::default() })
        .collect();
    Ok(WaveFunction::new_unchecked(psi.grid().clone(), amps, psi.time()))
}

fn check_len(what: &str, v: &[f64], dims: usize) -> Result<()> {
    if v.len() != dims || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} must have {dims} finite components")));
    }
    Ok(())
}

pub fn make_partition(grid: &GridSpec, spec: &PartitionSpec) -> Result<RegionPartition> {
    let dims = grid.dims();
    let centres = || (0..grid.len()).map(|i| grid.position(i));
    match spec {
        PartitionSpec::Whole => {
            Ok(RegionPartition { grid: grid.clone(), labels: vec![0; grid.len()], names: vec!["all".into()] })
        }
        PartitionSpec::HalfPlane { axis, at } => {
            if *axis >= dims {
                return Err(Error::invalid(format!("half-plane axis {axis} on a {dims}D grid")));
            }
            if !at.is_finite() {
                return Err(Error::invalid("half-plane position must be finite"));
            }
            let labels = centres().map(|p| (p[*axis] >= *at) as u32).collect();
            Ok(RegionPartition { grid: grid.clone(), labels, names: vec!["lo".into(), "hi".into()] })
        }
        PartitionSpec::SquareTiling { side, origin } => {
            if !(side.is_finite() && *side > 0.0) {
                return Err(Error::invalid(format!("tile side must be positive, got {side}")));
            }
            let origin = origin.clone().unwrap_or_else(|| vec![0.0; dims]);
            check_len("tiling origin", &origin, dims)?;
            square_tiling(grid, *side, &origin)
        }
        PartitionSpec::Boxes { regions } => {
            if regions.is_empty() {
                return Err(Error::invalid("box partition has no regions"));
            }
            for r in regions {
                check_len(&format!("box {:?} lo", r.name), &r.lo, dims)?;
                check_len(&format!("box {:?} hi", r.name), &r.hi, dims)?;
            }
            unique_names(regions.iter().map(|r| r.name.as_str()))?;
            let mut labels = Vec::with_capacity(grid.len());
            let mut uncovered = 0usize;
            for (i, p) in centres().enumerate() {
                let mut hit =
                    regions.iter().enumerate().filter(|(_, r)| (0..dims).all(|a| p[a] >= r.lo[a] && p[a] < r.hi[a]));
                match (hit.next(), hit.next()) {
                    (Some((k, _)), None) => labels.push(k as u32),
                    (Some((a, _)), Some((b, _))) => {
                        return Err(Error::invalid(format!(
                            "regions {:?} and {:?} overlap at cell {i} ({p:?})",
                            regions[a].name, regions[b].name
                        )))
                    }
                    _ => {
                        uncovered += 1;
                        labels.push(u32::MAX);
                    }
                }
            }
            if uncovered > 0 {
                return Err(Error::invalid(format!("boxes leave {uncovered} cells uncovered")));
            }
            Ok(RegionPartition { grid: grid.clone(), labels, names: regions.iter().map(|r| r.name.clone()).collect() })
        }
        PartitionSpec::Cells { names, labels } => {
            if labels.len() != grid.len() {
                return Err(Error::invalid(format!("cell map has {} labels for {} cells", labels.len(), grid.len())));
            }
            unique_names(names.iter().map(String::as_str))?;
            if let Some(bad) = labels.iter().find(|&&l| l as usize >= names.len()) {
                return Err(Error::invalid(format!("cell label {bad} has no name")));
            }
            Ok(RegionPartition { grid: grid.clone(), labels: labels.clone(), names: names.clone() })
        }
    }
}

fn unique_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::invalid(format!("region name {n:?} is used twice")));
        }
    }
    Ok(())
}

fn square_tiling(grid: &GridSpec, side: f64, origin: &[f64]) -> Result<RegionPartition> {
    let dims = grid.dims();
    // per axis: raw index of the first tile, tile count, and whether to wrap
    let mut axes = Vec::with_capacity(dims);
    for a in 0..dims {
        let l = grid.extent()[a];
        let half = 0.5 * l;
        let lo = ((-half - origin[a]) / side).floor() as i64;
        let ratio = l / side;
        let periodic = (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0;
        let count = if periodic {
            ratio.round() as i64
        } else {
            let last = grid.coord(a, grid.points()[a] - 1);
            ((last - origin[a]) / side).floor() as i64 - lo + 1
        };
        axes.push((lo, count, periodic));
    }
    let tile = |a: usize, x: f64| -> i64 {
        let (lo, count, periodic) = axes[a];
        let raw = ((x - origin[a]) / side).floor() as i64;
        if periodic {
            lo + (raw - lo).rem_euclid(count)
        } else {
            raw
        }
    };
    let mut names = Vec::new();
    let mut index = std::collections::HashMap::new();
    let mut labels = Vec::with_capacity(grid.len());
    // enumerate names in a fixed order: x-major, then y
    let (lx, cx, _) = axes[0];
    let (ly, cy) = if dims == 2 { (axes[1].0, axes[1].1) } else { (0, 1) };
    for i in 0..cx {
        for j in 0..cy {
            let key = (lx + i, ly + j);
            index.insert(key, names.len() as u32);
            names.push(if dims == 2 { format!("{}:{}", key.0, key.1) } else { format!("{}", key.0) });
        }
    }
    for c in 0..grid.len() {
        let p = grid.position(c);
        let key = (tile(0, p[0]), if dims == 2 { tile(1, p[1]) } else { 0 });
        let l = *index.get(&key).ok_or_else(|| Error::invalid(format!("cell at {p:?} falls outside the tiling")))?;
        labels.push(l);
    }
    Ok(RegionPartition { grid: grid.clone(), labels, names })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_box() {
        let g = GridSpec::square(16, 2.0).unwrap();
        let p = make_partition(&g, &PartitionSpec::Whole).unwrap();
        assert_eq!(p.count(), 1);
        assert!(p.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn periodic_unit_squares_have_equal_cell_counts() {
        let g = GridSpec::square(64, 8.0).unwrap();
        let spec = PartitionSpec::SquareTiling { side: 1.0, origin: Some(vec![-0.5, -0.5]) };
        let p = make_partition(&g, &spec).unwrap();
        assert_eq!(p.count(), 64);
        assert!(p.cells_per_label().iter().all(|&c| c == 64));
        assert_eq!(p.name(p.label_of_point([-3.0, 3.0]).unwrap()), "-3:3");
        assert_eq!(p.name(p.label_of_point([0.4, -0.5]).unwrap()), "0:0");
        // lower-inclusive edge at x = 0.5 (a grid point)
        assert_eq!(p.name(p.label_of_point([0.5, 0.0]).unwrap()), "1:0");
        // the square straddling the box edge is one region
        let a = p.label_of_point([-3.9, 0.0]).unwrap();
        let b = p.label_of_point([3.9, 0.0]).unwrap();
        assert_eq!(a, b);
        assert_eq!(p.name(a), "-4:0");
        assert!(p.label_of_point([4.0, 0.0]).is_err());
    }

    #[test]
    fn non_periodic_tiling_clips_edge_tiles() {
        let g = GridSpec::line(32, 3.2).unwrap();
        let p = make_partition(&g, &PartitionSpec::SquareTiling { side: 1.0, origin: None }).unwrap();
        assert_eq!(p.names(), ["-2", "-1", "0", "1"]);
        let c = p.cells_per_label();
        assert_eq!(c.iter().sum::<usize>(), 32);
    }

    #[test]
    fn half_plane_mirror() {
        let g = GridSpec::square(16, 4.0).unwrap();
        let p = make_partition(&g, &PartitionSpec::HalfPlane { axis: 1, at: 0.0 }).unwrap();
        let n = g.ny();
        for iy in 1..n {
            for ix in 0..n {
                let a = p.label_of_cell(g.flat(ix, iy));
                let b = p.label_of_cell(g.flat(ix, n - iy));
                // only the boundary row y = 0 maps to itself
                if iy != n / 2 {
                    assert_ne!(a, b);
                }
            }
        }
        assert!(make_partition(&g, &PartitionSpec::HalfPlane { axis: 2, at: 0.0 }).is_err());
    }

    #[test]
    fn boxes_must_cover_without_overlap() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let r = |n: &str, lo: f64, hi: f64| BoxRegion { name: n.into(), lo: vec![lo], hi: vec![hi] };
        let ok = PartitionSpec::Boxes { regions: vec![r("a", -2.0, 0.0), r("b", 0.0, 2.0)] };
        let p = make_partition(&g, &ok).unwrap();
        assert_eq!(p.cells_per_label(), vec![8, 8]);
        let overlap = PartitionSpec::Boxes { regions: vec![r("a", -2.0, 0.5), r("b", 0.0, 2.0)] };
        assert!(make_partition(&g, &overlap).unwrap_err().to_string().contains("overlap"));
        let gap = PartitionSpec::Boxes { regions: vec![r("a", -2.0, -0.5), r("b", 0.0, 2.0)] };
        assert!(make_partition(&g, &gap).unwrap_err().to_string().contains("uncovered"));
        let dup = PartitionSpec::Boxes { regions: vec![r("a", -2.0, 0.0), r("a", 0.0, 2.0)] };
        assert!(make_partition(&g, &dup).is_err());
    }

    #[test]
    fn cell_map_validation() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let good =
            PartitionSpec::Cells { names: vec!["x".into(), "y".into()], labels: (0..16).map(|i| i % 2).collect() };
        assert_eq!(make_partition(&g, &good).unwrap().count(), 2);
        let bad = PartitionSpec::Cells { names: vec!["x".into()], labels: (0..16).map(|i| i % 2).collect() };
        assert!(make_partition(&g, &bad).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = r#"{"kind":"square_tiling","side":1.0,"origin":[-0.5,-0.5]}"#;
        let spec: PartitionSpec = serde_json::from_str(s).unwrap();
        assert_eq!(spec, PartitionSpec::SquareTiling { side: 1.0, origin: Some(vec![-0.5, -0.5]) });
        assert!(serde_json::from_str::<PartitionSpec>(r#"{"kind":"half_plane","axis":0,"at":0.0,"x":1}"#).is_err());
        assert!(serde_json::from_str::<PartitionSpec>(r#"{"kind":"hexagons"}"#).is_err());
    }

    #[test]
    fn projector_algebra() {
        let g = GridSpec::square(16, 2.0).unwrap();
        let p = make_partition(&g, &PartitionSpec::SquareTiling { side: 0.5, origin: None }).unwrap();
        let amps = (0..g.len()).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let psi = WaveFunction::from_parts(g.clone(), amps, 0.0).unwrap();
        let a = project(&psi, &p, 3).unwrap();
        assert_eq!(project(&a, &p, 3).unwrap(), a);
        let z = project(&a, &p, 4).unwrap();
        assert!(z.amplitudes().iter().all(|z| *z == Complex64::default()));
        let mut sum = vec![Complex64::default(); g.len()];
        for l in 0..p.count() as u32 {
            for (s, z) in sum.iter_mut().zip(project(&psi, &p, l).unwrap().amplitudes()) {
                *s += z;
            }
        }
        assert_eq!(sum, psi.amplitudes());
        assert!(project(&psi, &p, 99).is_err());
    }
}
