use std::collections::BTreeSet;
use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use super::BohmHistogram;
use crate::error::{Error, Result};
use crate::fmt::num;
use crate::histories::{DhTable, HistoryLabel, HistorySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOptions {
    /// Smallest absolute difference that can count as disagreement.
    pub abs_tol: f64,
    /// Smallest significance, in standard errors, that can count as
    /// disagreement.
    pub sigmas: f64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { abs_tol: 0.05, sigmas: 5.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Agree,
    Disagree,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Agree => "agree",
            Verdict::Disagree => "disagree",
        }
    }
}

/// Which standard error a significance was measured in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    /// Binomial error of the Monte Carlo estimate.
    Mc,
    /// The Monte Carlo estimate is 0 or 1, so its own error vanishes; the
    /// binomial error an `N`-sample estimate of `p_dh` would have is used.
    Null,
    /// Both errors vanish.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub p_dh: f64,
    pub p_bm: f64,
    pub mc_err: f64,
    pub diff: f64,
    /// `diff` in units of the error named by `sigma_source`.
    pub sigmas: Option<f64>,
    pub sigma_source: SigmaSource,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub options: CompareOptions,
    pub dh_consistent: bool,
    pub dh_eps: f64,
    pub dh_max_normalized_offdiag: f64,
    pub dh_pruned_mass: f64,
    pub n: usize,
    pub seed: u64,
    pub excluded: usize,
    pub max_diff: f64,
    pub verdict: Verdict,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn disagreeing(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.verdict == Verdict::Disagree)
    }

    /// `label,p_dh,p_bm,mc_err,sigmas,verdict` rows; `sigmas` is empty when
    /// no error estimate exists.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = BufWriter::new(out);
        writeln!(w, "label,p_dh,p_bm,mc_err,sigmas,verdict")?;
        for r in &self.rows {
            let s = r.sigmas.map(num).unwrap_or_default();
            writeln!(w, "{},{},{},{},{s},{}", r.label, num(r.p_dh), num(r.p_bm), num(r.mc_err), r.verdict.as_str())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Label-by-label comparison. A label disagrees when its probabilities
/// differ by more than `abs_tol` and by more than `sigmas` standard errors;
/// the report disagrees when any label does.
pub fn compare(
    dh: &DhTable,
    bm: &BohmHistogram,
    hist: &HistorySpec,
    opts: &CompareOptions,
) -> Result<ComparisonReport> {
    if dh.label_space != bm.label_space || dh.label_space != hist.label_space() {
        return Err(Error::LabelMismatch("probability tables were built over different histories".into()));
    }
    let labels: BTreeSet<&HistoryLabel> = dh.labels.iter().chain(&bm.labels).collect();
    let n = bm.n as f64;
    let rows: Vec<ComparisonRow> = labels
        .into_iter()
        .map(|l| {
            let p_dh = dh.probability(l);
            let p_bm = bm.probability(l);
            let mc_err = bm.mc_error(l);
            let diff = (p_dh - p_bm).abs();
            let null = (p_dh.clamp(0.0, 1.0) * (1.0 - p_dh.clamp(0.0, 1.0)) / n).sqrt();
            let (sigma, source) = if mc_err > 0.0 {
                (mc_err, SigmaSource::Mc)
            } else if null > 0.0 {
                (null, SigmaSource::Null)
            } else {
                (0.0, SigmaSource::None)
            };
            let sigmas = (sigma > 0.0).then(|| diff / sigma);
            let significant = match sigmas {
                Some(s) => s > opts.sigmas,
                None => diff > 0.0,
            };
            let verdict = if diff > opts.abs_tol && significant { Verdict::Disagree } else { Verdict::Agree };
            ComparisonRow {
                label: hist.format_label(l),
                p_dh,
                p_bm,
                mc_err,
                diff,
                sigmas,
                sigma_source: source,
                verdict,
            }
        })
        .collect();
    let verdict = if rows.iter().any(|r| r.verdict == Verdict::Disagree) { Verdict::Disagree } else { Verdict::Agree };
    Ok(ComparisonReport {
        options: opts.clone(),
        dh_consistent: dh.report.consistent,
        dh_eps: dh.report.eps,
        dh_max_normalized_offdiag: dh.report.max_normalized_offdiag,
        dh_pruned_mass: dh.pruned_mass,
        n: bm.n,
        seed: bm.seed,
        excluded: bm.excluded,
        max_diff: rows.iter().map(|r| r.diff).fold(0.0, f64::max),
        verdict,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histories::{make_partition, ConsistencyReport, PartitionSpec};
    use crate::qstate::GridSpec;

    fn hist() -> HistorySpec {
        let g = GridSpec::line(16, 4.0).unwrap();
        let p = make_partition(&g, &PartitionSpec::HalfPlane { axis: 0, at: 0.0 }).unwrap();
        HistorySpec::repeated(vec![1.0], p).unwrap()
    }

    fn dh(h: &HistorySpec, p: [f64; 2]) -> DhTable {
        DhTable {
            label_space: h.label_space(),
            labels: vec![vec![0], vec![1]],
            p: p.to_vec(),
            report: ConsistencyReport {
                eps: 0.05,
                min_weight: 0.0,
                consistent: true,
                max_normalized_offdiag: 0.0,
                worst_pair: None,
                max_normalized_offdiag_all: 0.0,
                worst_pair_all: None,
            },
            pruned_mass: 0.0,
        }
    }

    fn bm(h: &HistorySpec, counts: [usize; 2]) -> BohmHistogram {
        let labels: Vec<HistoryLabel> = (0..2).filter(|&i| counts[i] > 0).map(|i| vec![i as u32]).collect();
        BohmHistogram {
            label_space: h.label_space(),
            counts: counts.iter().copied().filter(|&c| c > 0).collect(),
            labels,
            n: counts.iter().sum(),
            seed: 1,
            excluded: 0,
        }
    }

    #[test]
    fn identical_tables_agree_exactly() {
        let h = hist();
        let r = compare(&dh(&h, [0.25, 0.75]), &bm(&h, [250, 750]), &h, &CompareOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Agree);
        assert!(r.rows.iter().all(|r| r.diff == 0.0));
        assert_eq!(r.rows[0].sigmas, Some(0.0));
    }

    #[test]
    fn both_thresholds_are_needed() {
        let h = hist();
        let opts = CompareOptions::default();
        // large but noisy at N = 10
        let r = compare(&dh(&h, [0.5, 0.5]), &bm(&h, [3, 7]), &h, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Agree);
        // significant but tiny
        let r = compare(&dh(&h, [0.5, 0.5]), &bm(&h, [490_000, 510_000]), &h, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Agree);
        let r = compare(&dh(&h, [0.5, 0.5]), &bm(&h, [40_000, 60_000]), &h, &opts).unwrap();
        assert_eq!(r.verdict, Verdict::Disagree);
    }

    #[test]
    fn empty_bohmian_bin_uses_null_error() {
        let h = hist();
        let r = compare(&dh(&h, [0.5, 0.5]), &bm(&h, [0, 100_000]), &h, &CompareOptions::default()).unwrap();
        let row = r.row("lo").unwrap();
        assert_eq!(row.sigma_source, SigmaSource::Null);
        assert_eq!(row.verdict, Verdict::Disagree);
        assert_eq!(r.verdict, Verdict::Disagree);
    }

    #[test]
    fn label_space_mismatch() {
        let h = hist();
        let g = GridSpec::line(16, 4.0).unwrap();
        let other = HistorySpec::repeated(vec![1.0], make_partition(&g, &PartitionSpec::Whole).unwrap()).unwrap();
        let e = compare(&dh(&h, [0.5, 0.5]), &bm(&other, [1, 0]), &h, &CompareOptions::default());
        assert!(matches!(e, Err(Error::LabelMismatch(_))));
    }
}
