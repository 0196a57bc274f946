//! Bohmian probabilities of coarse-grained histories, estimated by
//! classifying an equilibrium trajectory ensemble, and their comparison with
//! decoherent-histories probabilities.

mod compare;
mod sequences;

use std::collections::BTreeMap;
use std::io::{BufWriter, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bohm::{TrajStatus, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::fmt::num;
use crate::histories::{HistoryLabel, HistorySpec};
use crate::qstate::Point;

pub use compare::{compare, CompareOptions, ComparisonReport, ComparisonRow, SigmaSource, Verdict};
pub use sequences::{high_probability_sequences, write_sequences_csv, Sequence};

/// Region label at each history time for one trajectory, given its
/// positions at exactly those times.
pub fn classify_trajectory(positions: &[Point], hist: &HistorySpec) -> Result<HistoryLabel> {
    if positions.len() != hist.len() {
        return Err(Error::invalid(format!("{} positions for {} history times", positions.len(), hist.len())));
    }
    positions.iter().enumerate().map(|(k, &p)| hist.partition(k).label_of_point(p)).collect()
}

/// Record index in `ens` for every history time.
fn record_slots(ens: &TrajectoryEnsemble, hist: &HistorySpec) -> Result<Vec<usize>> {
    hist.grid().ensure_same(ens.grid())?;
    hist.times()
        .iter()
        .map(|&t| {
            ens.record_index(t)
                .ok_or_else(|| Error::invalid(format!("ensemble has no positions recorded at history time {t}")))
        })
        .collect()
}

/// Label of every trajectory; `None` for node-rescued ones.
pub fn classify_ensemble(ens: &TrajectoryEnsemble, hist: &HistorySpec) -> Result<Vec<Option<HistoryLabel>>> {
    let slots = record_slots(ens, hist)?;
    (0..ens.len())
        .into_par_iter()
        .map(|i| {
            if ens.status()[i] == TrajStatus::NodeRescued {
                return Ok(None);
            }
            let pos: Vec<Point> = slots.iter().map(|&r| ens.records()[r][i]).collect();
            classify_trajectory(&pos, hist).map(Some)
        })
        .collect()
}

/// Monte Carlo estimate of the Bohmian history probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BohmHistogram {
    pub label_space: Vec<Vec<String>>,
    /// Labels with at least one trajectory, in lexicographic order.
    pub labels: Vec<HistoryLabel>,
    pub counts: Vec<usize>,
    /// Classified trajectories; the denominator of every estimate.
    pub n: usize,
    pub seed: u64,
    /// Node-rescued trajectories left out of the histogram.
    pub excluded: usize,
}

impl BohmHistogram {
    fn find(&self, alpha: &[u32]) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_slice().cmp(alpha)).ok()
    }

    pub fn count(&self, alpha: &[u32]) -> usize {
        self.find(alpha).map_or(0, |i| self.counts[i])
    }

    pub fn probability(&self, alpha: &[u32]) -> f64 {
        self.count(alpha) as f64 / self.n as f64
    }

    /// Binomial standard error `sqrt(p (1 - p) / N)`.
    pub fn mc_error(&self, alpha: &[u32]) -> f64 {
        let p = self.probability(alpha);
        (p * (1.0 - p) / self.n as f64).sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }

    /// `label,count,p,mc_err` rows.
    pub fn write_csv<W: Write>(&self, out: W, hist: &HistorySpec) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "label,count,p,mc_err")?;
        for (l, &c) in self.labels.iter().zip(&self.counts) {
            writeln!(w, "{},{c},{},{}", hist.format_label(l), num(self.probability(l)), num(self.mc_error(l)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Classify every trajectory of `ens` against `hist`. The ensemble must hold
/// records at all history times; node-rescued trajectories are excluded and
/// counted separately.
pub fn bm_probabilities(ens: &TrajectoryEnsemble, hist: &HistorySpec) -> Result<BohmHistogram> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble("no trajectories to classify".into()));
    }
    let labels = classify_ensemble(ens, hist)?;
    let mut hist_map: BTreeMap<HistoryLabel, usize> = BTreeMap::new();
    let mut excluded = 0;
    for l in labels {
        match l {
            Some(l) => *hist_map.entry(l).or_default() += 1,
            None => excluded += 1,
        }
    }
    let n = ens.len() - excluded;
    if n == 0 {
        return Err(Error::EmptyEnsemble("no trajectories to classify".into()));
    }
    let (labels, counts) = hist_map.into_iter().unzip();
    Ok(BohmHistogram { label_space: hist.label_space(), labels, counts, n, seed: ens.seed(), excluded })
}

/// Initial points of the trajectories classified as `alpha`: a sampled image
/// of the set of starting positions that realize the history. It depends on
/// the state, not only on the regions.
pub fn initial_cell(ens: &TrajectoryEnsemble, hist: &HistorySpec, alpha: &[u32]) -> Result<Vec<Point>> {
    hist.check_label(alpha)?;
    let labels = classify_ensemble(ens, hist)?;
    Ok(labels.iter().zip(ens.initial()).filter(|(l, _)| l.as_deref() == Some(alpha)).map(|(_, &p)| p).collect())
}
