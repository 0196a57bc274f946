use std::io::{BufWriter, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::project;
use super::spec::{HistoryLabel, HistorySpec};
use crate::error::{Error, Result};
use crate::fmt::num;
use crate::qstate::{Propagator, WaveFunction};

/// Evolve `psi` from its own time to `t`.
fn evolve_to(prop: &Propagator, psi: &WaveFunction, t: f64, max_dt: f64) -> Result<WaveFunction> {
    let out = prop.evolve_for(psi, t - psi.time(), max_dt)?;
    Ok(out.at_time(t))
}

fn check_start(psi0: &WaveFunction, hist: &HistorySpec) -> Result<()> {
    hist.grid().ensure_same(psi0.grid())?;
    if psi0.time() >= hist.times()[0] {
        return Err(Error::invalid(format!(
            "initial state at t = {} is not before the first history time {}",
            psi0.time(),
            hist.times()[0]
        )));
    }
    Ok(())
}

/// Branch vector `C_alpha |psi0>`: alternate evolution to each history time
/// and projection onto the region of `alpha` there. The result lives at `t_n`
/// and is not renormalized.
pub fn chain_apply(
    psi0: &WaveFunction,
    prop: &Propagator,
    hist: &HistorySpec,
    alpha: &[u32],
    max_dt: f64,
) -> Result<WaveFunction> {
    check_start(psi0, hist)?;
    hist.check_label(alpha)?;
    let mut psi = psi0.clone();
    for (k, &t) in hist.times().iter().enumerate() {
        psi = evolve_to(prop, &psi, t, max_dt)?;
        psi = project(&psi, hist.partition(k), alpha[k])?;
    }
    Ok(psi)
}

/// Controls for the branch-tree traversal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeOptions {
    /// Branches whose squared norm falls below this are dropped.
    pub prune: f64,
    /// Most surviving branches allowed at any history time.
    pub max_branches: usize,
    /// Longest propagator step when the potential is not zero.
    pub max_dt: f64,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions { prune: 1e-8, max_branches: 10_000, max_dt: 1e-3 }
    }
}

impl TreeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune.is_finite() && self.prune >= 0.0) {
            return Err(Error::invalid("prune threshold must be non-negative"));
        }
        if self.max_branches == 0 {
            return Err(Error::invalid("max_branches must be positive"));
        }
        if !(self.max_dt.is_finite() && self.max_dt > 0.0) {
            return Err(Error::invalid("max_dt must be positive"));
        }
        Ok(())
    }
}

/// Bookkeeping of the mass dropped by pruning.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneStats {
    /// Number of dropped branches.
    pub count: usize,
    /// Sum of their squared norms; the diagonal mass lost from the table.
    pub mass: f64,
    /// Sum of their norms. The total sum of the retained matrix differs from
    /// one by at most `2 s + s^2` for this `s`.
    pub norm_sum: f64,
    /// Surviving branches per history time.
    pub survivors: Vec<usize>,
    /// Propagations performed.
    pub evolutions: usize,
}

impl PruneStats {
    pub fn sum_rule_bound(&self) -> f64 {
        2.0 * self.norm_sum + self.norm_sum * self.norm_sum
    }
}

/// Gram block of branches that end in the same final region. Branches ending
/// in different final regions are exactly orthogonal.
#[derive(Clone, Debug, PartialEq)]
struct Block {
    members: Vec<usize>,
    /// Row-major `members.len()` squared entries.
    gram: Vec<Complex64>,
}

/// `D(a', a) = <psi| C_{a'}^dag C_a |psi>` over the surviving histories.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceMatrix {
    labels: Vec<HistoryLabel>,
    blocks: Vec<Block>,
    /// `(block, position in block)` per label.
    place: Vec<(usize, usize)>,
    pruned: PruneStats,
}

impl DecoherenceMatrix {
    pub fn labels(&self) -> &[HistoryLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_slice().cmp(alpha)).ok()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let (bi, pi) = self.place[i];
        let (bj, pj) = self.place[j];
        if bi != bj {
            return Complex64::default();
        }
        let b = &self.blocks[bi];
        b.gram[pi * b.members.len() + pj]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i, i).re).collect()
    }

    pub fn pruned(&self) -> &PruneStats {
        &self.pruned
    }

    /// Every possibly non-zero entry `(i, j, D_ij)`, block by block.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.blocks.iter().flat_map(|b| {
            let m = b.members.len();
            (0..m * m).map(move |k| (b.members[k / m], b.members[k % m], b.gram[k]))
        })
    }

    /// Sum of all entries.
    pub fn total(&self) -> Complex64 {
        self.entries().map(|(_, _, z)| z).sum()
    }

    /// Largest `|D_ij - conj(D_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.entries().map(|(i, j, z)| (z - self.get(j, i).conj()).norm()).fold(0.0, f64::max)
    }

    /// `|D_ij| / sqrt(D_ii D_jj)`.
    pub fn normalized(&self, i: usize, j: usize) -> f64 {
        let d = (self.get(i, i).re * self.get(j, j).re).sqrt();
        if d > 0.0 {
            self.get(i, j).norm() / d
        } else {
            0.0
        }
    }

    /// CSV rows `alpha_prime,alpha,re,im` for every entry in a block;
    /// pairs not listed are exactly zero.
    pub fn write_csv<W: Write>(&self, out: W, hist: &HistorySpec) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "alpha_prime,alpha,re,im")?;
        let mut rows: Vec<(usize, usize, Complex64)> = self.entries().collect();
        rows.sort_by_key(|&(i, j, _)| (i, j));
        for (i, j, z) in rows {
            writeln!(
                w,
                "{},{},{},{}",
                hist.format_label(&self.labels[i]),
                hist.format_label(&self.labels[j]),
                num(z.re),
                num(z.im)
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Leaf {
    label: HistoryLabel,
    amps: Vec<Complex64>,
}

struct Tree<'a> {
    prop: &'a Propagator,
    hist: &'a HistorySpec,
    opts: &'a TreeOptions,
    /// Cells of each region of the final partition.
    final_members: Vec<Vec<usize>>,
    leaves: Vec<Leaf>,
    stats: PruneStats,
}

impl Tree<'_> {
    fn descend(&mut self, level: usize, psi: &WaveFunction, prefix: &mut HistoryLabel) -> Result<()> {
        let t = self.hist.times()[level];
        let q = evolve_to(self.prop, psi, t, self.opts.max_dt)?;
        self.stats.evolutions += 1;
        let part = self.hist.partition(level);
        let weights = part.weights(&q)?;
        let last = level + 1 == self.hist.len();
        for (label, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            if w < self.opts.prune {
                self.stats.count += 1;
                self.stats.mass += w;
                self.stats.norm_sum += w.sqrt();
                continue;
            }
            self.stats.survivors[level] += 1;
            if self.stats.survivors[level] > self.opts.max_branches {
                return Err(Error::BranchExplosion { limit: self.opts.max_branches, level: level + 1 });
            }
            prefix.push(label as u32);
            if last {
                let amps = self.final_members[label].iter().map(|&c| q.amplitudes()[c]).collect();
                self.leaves.push(Leaf { label: prefix.clone(), amps });
            } else {
                let child = project(&q, part, label as u32)?;
                self.descend(level + 1, &child, prefix)?;
            }
            prefix.pop();
        }
        Ok(())
    }
}

/// Decoherence functional by depth-first traversal of the branch tree.
///
/// At each history time the current branch is evolved and split by the
/// partition; children lighter than `opts.prune` are dropped and tallied in
/// [`PruneStats`]. Labels come out in lexicographic order.
pub fn decoherence_matrix(
    psi0: &WaveFunction,
    prop: &Propagator,
    hist: &HistorySpec,
    opts: &TreeOptions,
) -> Result<DecoherenceMatrix> {
    opts.validate()?;
    check_start(psi0, hist)?;
    prop.grid().ensure_same(psi0.grid())?;
    let final_part = hist.partition(hist.len() - 1);
    let mut tree = Tree {
        prop,
        hist,
        opts,
        final_members: final_part.members(),
        leaves: Vec::new(),
        stats: PruneStats { survivors: vec![0; hist.len()], ..Default::default() },
    };
    tree.descend(0, psi0, &mut Vec::with_capacity(hist.len()))?;
    let Tree { leaves, stats, .. } = tree;

    let dv = hist.grid().cell_volume();
    let n = leaves.len();
    let mut by_region: Vec<Vec<usize>> = vec![Vec::new(); final_part.count()];
    for (i, leaf) in leaves.iter().enumerate() {
        by_region[*leaf.label.last().unwrap() as usize].push(i);
    }
    let mut place = vec![(0, 0); n];
    let mut blocks = Vec::new();
    for members in by_region.into_iter().filter(|m| !m.is_empty()) {
        let m = members.len();
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect();
        let values: Vec<Complex64> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let x = &leaves[members[a]].amps;
                let y = &leaves[members[b]].amps;
                x.iter().zip(y).map(|(u, v)| u.conj() * v).sum::<Complex64>() * dv
            })
            .collect();
        let mut gram = vec![Complex64::default(); m * m];
        for (&(a, b), z) in pairs.iter().zip(values) {
            gram[a * m + b] = z;
            gram[b * m + a] = z.conj();
        }
        for a in 0..m {
            gram[a * m + a].im = 0.0;
        }
        for (pos, &leaf) in members.iter().enumerate() {
            place[leaf] = (blocks.len(), pos);
        }
        blocks.push(Block { members, gram });
    }
    Ok(DecoherenceMatrix { labels: leaves.into_iter().map(|l| l.label).collect(), blocks, place, pruned: stats })
}

/// Outcome of the medium-decoherence test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub eps: f64,
    /// Pairs are tested only when both histories carry at least this weight.
    pub min_weight: f64,
    pub consistent: bool,
    /// Largest normalized off-diagonal magnitude among tested pairs, and
    /// where it occurs.
    pub max_normalized_offdiag: f64,
    pub worst_pair: Option<(String, String)>,
    /// The same over every pair of surviving histories, whatever their weight.
    pub max_normalized_offdiag_all: f64,
    pub worst_pair_all: Option<(String, String)>,
}

/// Decoherent-histories probabilities `p_alpha = D(alpha, alpha)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DhTable {
    pub label_space: Vec<Vec<String>>,
    pub labels: Vec<HistoryLabel>,
    pub p: Vec<f64>,
    pub report: ConsistencyReport,
    pub pruned_mass: f64,
}

impl DhTable {
    pub fn probability(&self, alpha: &[u32]) -> f64 {
        self.labels.binary_search_by(|l| l.as_slice().cmp(alpha)).map_or(0.0, |i| self.p[i])
    }

    /// `label,p,consistent` rows.
    pub fn write_csv<W: Write>(&self, out: W, hist: &HistorySpec) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "label,p,consistent")?;
        for (l, p) in self.labels.iter().zip(&self.p) {
            writeln!(w, "{},{},{}", hist.format_label(l), num(*p), self.report.consistent)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const DEFAULT_EPS_CONSISTENCY: f64 = 0.05;
pub const DEFAULT_CONSISTENCY_MIN_WEIGHT: f64 = 1e-3;

/// Diagonal probabilities plus the consistency flag: consistent iff every
/// normalized off-diagonal entry between histories of weight at least
/// `min_weight` is below `eps`. Use `min_weight = 0` for the unrestricted test.
pub fn dh_probabilities(d: &DecoherenceMatrix, hist: &HistorySpec, eps: f64, min_weight: f64) -> Result<DhTable> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid("consistency threshold must be positive"));
    }
    if !(min_weight.is_finite() && min_weight >= 0.0) {
        return Err(Error::invalid("consistency weight floor must be non-negative"));
    }
    let p = d.diagonal();
    let (mut worst, mut pair) = (0.0, None);
    let (mut worst_all, mut pair_all) = (0.0, None);
    for (i, j, _) in d.entries() {
        if i < j {
            let v = d.normalized(i, j);
            if v > worst_all {
                worst_all = v;
                pair_all = Some((i, j));
            }
            if v > worst && p[i] >= min_weight && p[j] >= min_weight {
                worst = v;
                pair = Some((i, j));
            }
        }
    }
    let name = |(i, j): (usize, usize)| (hist.format_label(&d.labels[i]), hist.format_label(&d.labels[j]));
    Ok(DhTable {
        label_space: hist.label_space(),
        labels: d.labels().to_vec(),
        p,
        report: ConsistencyReport {
            eps,
            min_weight,
            consistent: worst < eps,
            max_normalized_offdiag: worst,
            worst_pair: pair.map(name),
            max_normalized_offdiag_all: worst_all,
            worst_pair_all: pair_all.map(name),
        },
        pruned_mass: d.pruned.mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histories::partition::{make_partition, PartitionSpec};
    use crate::qstate::{init_gaussian, superpose, GaussianPacket, GridSpec, SystemConfig};
    use std::sync::Arc;

    fn two_packets(g: &GridSpec) -> WaveFunction {
        let sys = SystemConfig::default();
        let a =
            init_gaussian(g, &sys, &GaussianPacket { center: vec![-3.0], momentum: vec![4.0], sigma: 0.5 }).unwrap();
        let b =
            init_gaussian(g, &sys, &GaussianPacket { center: vec![3.0], momentum: vec![-4.0], sigma: 0.5 }).unwrap();
        let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        superpose(&[(c, &a), (c, &b)]).unwrap().psi
    }

    fn setup() -> (GridSpec, Propagator, WaveFunction) {
        let g = GridSpec::line(256, 16.0).unwrap();
        let p = Propagator::new(&g, &SystemConfig::default()).unwrap();
        let psi = two_packets(&g);
        (g, p, psi)
    }

    #[test]
    fn single_time_trivial_partition_is_evolution() {
        let (g, prop, psi) = setup();
        let part = make_partition(&g, &PartitionSpec::Whole).unwrap();
        let h = HistorySpec::repeated(vec![0.3], part).unwrap();
        let b = chain_apply(&psi, &prop, &h, &[0], 1.0).unwrap();
        let e = prop.evolve(&psi, 0.3, 1).unwrap();
        assert_eq!(b.amplitudes(), e.amplitudes());
        assert!((b.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_time_matrix_is_diagonal_and_sums_to_one() {
        let (g, prop, psi) = setup();
        let part = make_partition(&g, &PartitionSpec::SquareTiling { side: 2.0, origin: None }).unwrap();
        let h = HistorySpec::repeated(vec![0.4], part).unwrap();
        let d = decoherence_matrix(&psi, &prop, &h, &TreeOptions { prune: 0.0, ..Default::default() }).unwrap();
        for (i, j, z) in d.entries() {
            if i != j {
                assert_eq!(z, Complex64::default());
            }
        }
        assert!((d.total().re - 1.0).abs() < 1e-12);
        let t = dh_probabilities(&d, &h, DEFAULT_EPS_CONSISTENCY, 0.0).unwrap();
        assert!(t.report.consistent);
        assert!((t.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_matches_tree_diagonal() {
        let (g, prop, psi) = setup();
        let part = make_partition(&g, &PartitionSpec::HalfPlane { axis: 0, at: 0.0 }).unwrap();
        let h = HistorySpec::repeated(vec![0.5, 0.75, 1.5], part).unwrap();
        let d = decoherence_matrix(&psi, &prop, &h, &TreeOptions { prune: 0.0, ..Default::default() }).unwrap();
        assert_eq!(d.len(), 8);
        for (i, l) in d.labels().iter().enumerate() {
            let b = chain_apply(&psi, &prop, &h, l, 1.0).unwrap();
            assert!((b.norm_sqr() - d.get(i, i).re).abs() < 1e-12);
        }
        assert!((d.total().re - 1.0).abs() < 1e-9);
        assert!(d.total().im.abs() < 1e-9);
        assert_eq!(d.hermiticity_error(), 0.0);
    }

    #[test]
    fn interfering_packets_are_inconsistent() {
        // packets meet at the origin near t = 0.75
        let (g, prop, psi) = setup();
        let part = make_partition(&g, &PartitionSpec::HalfPlane { axis: 0, at: 0.0 }).unwrap();
        let h = HistorySpec::repeated(vec![0.25, 0.75], part).unwrap();
        let d = decoherence_matrix(&psi, &prop, &h, &TreeOptions::default()).unwrap();
        let t = dh_probabilities(&d, &h, DEFAULT_EPS_CONSISTENCY, 0.0).unwrap();
        assert!(!t.report.consistent, "{:?}", t.report);
        assert_eq!(t.report.max_normalized_offdiag, t.report.max_normalized_offdiag_all);

        // a floor above every weight leaves no pair to test
        let floored = dh_probabilities(&d, &h, DEFAULT_EPS_CONSISTENCY, 1.1).unwrap();
        assert!(floored.report.consistent);
        assert_eq!(floored.report.max_normalized_offdiag, 0.0);
        assert!(floored.report.worst_pair.is_none());
        assert_eq!(floored.report.max_normalized_offdiag_all, t.report.max_normalized_offdiag_all);
        assert_eq!(floored.report.worst_pair_all, t.report.worst_pair);
        assert!(dh_probabilities(&d, &h, DEFAULT_EPS_CONSISTENCY, -1.0).is_err());
    }

    #[test]
    fn branch_guard_trips() {
        let (g, prop, psi) = setup();
        let part = make_partition(&g, &PartitionSpec::SquareTiling { side: 0.5, origin: None }).unwrap();
        let h = HistorySpec::repeated(vec![0.5, 1.0], part).unwrap();
        let opts = TreeOptions { prune: 0.0, max_branches: 20, ..Default::default() };
        let e = decoherence_matrix(&psi, &prop, &h, &opts).unwrap_err();
        assert!(matches!(e, Error::BranchExplosion { limit: 20, .. }));
        assert!(e.is_numerical_guard());
    }

    #[test]
    fn pruned_mass_is_accounted() {
        let (g, prop, psi) = setup();
        let part = make_partition(&g, &PartitionSpec::SquareTiling { side: 1.0, origin: None }).unwrap();
        let h = HistorySpec::repeated(vec![0.2, 0.4], part).unwrap();
        let d = decoherence_matrix(&psi, &prop, &h, &TreeOptions { prune: 1e-4, ..Default::default() }).unwrap();
        let st = d.pruned();
        assert!(st.count > 0);
        let diag: f64 = d.diagonal().iter().sum();
        assert!((diag + st.mass - 1.0).abs() < 1e-9, "{diag} + {}", st.mass);
        assert!((d.total().re - 1.0).abs() <= st.sum_rule_bound() + 1e-9);
    }

    #[test]
    fn merging_final_regions_adds_branches() {
        let (g, prop, psi) = setup();
        let fine = make_partition(&g, &PartitionSpec::SquareTiling { side: 2.0, origin: None }).unwrap();
        // regions 4 and 5 merged into 4, later labels shifted down
        let relabel = |l: u32| if l <= 4 { l } else { l - 1 };
        let merged_labels: Vec<u32> = fine.labels().iter().map(|&l| relabel(l)).collect();
        let mut names: Vec<String> = fine.names().to_vec();
        names.remove(5);
        let coarse = make_partition(&g, &PartitionSpec::Cells { names, labels: merged_labels }).unwrap();
        let first = Arc::new(make_partition(&g, &PartitionSpec::HalfPlane { axis: 0, at: 0.0 }).unwrap());
        let hf = HistorySpec::new(vec![0.3, 0.9], vec![first.clone(), Arc::new(fine)]).unwrap();
        let hc = HistorySpec::new(vec![0.3, 0.9], vec![first, Arc::new(coarse)]).unwrap();
        let a = chain_apply(&psi, &prop, &hf, &[0, 4], 1.0).unwrap();
        let b = chain_apply(&psi, &prop, &hf, &[0, 5], 1.0).unwrap();
        let m = chain_apply(&psi, &prop, &hc, &[0, 4], 1.0).unwrap();
        for ((x, y), z) in a.amplitudes().iter().zip(b.amplitudes()).zip(m.amplitudes()) {
            assert!((x + y - z).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_state_after_first_time() {
        let (g, prop, psi) = setup();
        let part = make_partition(&g, &PartitionSpec::Whole).unwrap();
        let h = HistorySpec::repeated(vec![0.3], part).unwrap();
        let late = psi.at_time(0.5);
        assert!(chain_apply(&late, &prop, &h, &[0], 1.0).is_err());
    }
}
