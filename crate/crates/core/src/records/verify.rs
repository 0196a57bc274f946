use serde::{Deserialize, Serialize};

use super::model::{CVector, FiniteModel, RecordFamily};
use crate::error::{Error, Result};

/// Which history operators the records are tested against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Chains of projectors interleaved with evolution.
    Decoherent,
    /// The model's `t = 0` family.
    Bohmian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub family: String,
    pub formulation: Formulation,
    pub tol: f64,
    pub pass: bool,
    /// `max_{b != a} |R_b U h_a|` over history vectors `h_a`.
    pub max_off_correlation: f64,
    /// `max_a |R_a U h_a - U h_a|`.
    pub max_diagonal_defect: f64,
    /// `max_b |R_b U(t_R, 0) Psi - U h_b|`, the summed form of the condition.
    pub summed_identity_residual: f64,
    pub history_probabilities: Vec<f64>,
    pub record_probabilities: Vec<f64>,
    /// `max |p_history - p_record|`.
    pub probability_residual: f64,
    /// `|sum p_record - 1|`.
    pub record_sum_residual: f64,
    /// Histories with non-zero weight.
    pub supported: usize,
}

/// `C_a |Psi>` at the last history time for every flat label.
pub fn chain_branches(m: &FiniteModel) -> Vec<CVector> {
    let mut branches = vec![&m.unitaries[0] * &m.initial];
    for (k, fam) in m.history.iter().enumerate() {
        let mut next = Vec::with_capacity(branches.len() * fam.len());
        for b in &branches {
            for p in fam {
                let v = p * b;
                next.push(if k + 1 < m.times() { &m.unitaries[k + 1] * v } else { v });
            }
        }
        branches = next;
    }
    branches
}

/// `B_a |Psi>` for every flat label.
pub fn bohm_branches(m: &FiniteModel) -> Result<Vec<CVector>> {
    let b = m.bohm.as_ref().ok_or_else(|| Error::invalid("model has no t = 0 history family"))?;
    Ok(b.iter().map(|p| p * &m.initial).collect())
}

fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Check `R_b U h_a = delta_ab U h_a` for the chosen history operators,
/// where `U` runs to the readout time, together with its summed form and the
/// resulting equality of record and history probabilities.
pub fn verify_record_correlation(
    m: &FiniteModel,
    formulation: Formulation,
    family: &RecordFamily,
    tol: f64,
) -> Result<CorrelationReport> {
    let at_readout: Vec<CVector> = match formulation {
        Formulation::Decoherent => {
            let u = m.readout_evolution();
            chain_branches(m).iter().map(|b| u * b).collect()
        }
        Formulation::Bohmian => {
            let u = m.total_evolution();
            bohm_branches(m)?.iter().map(|b| &u * b).collect()
        }
    };
    let r = &family.projectors;
    let psi_r = m.total_evolution() * &m.initial;
    let labels = at_readout.len().max(r.len());
    let zero = CVector::zeros(m.dim());
    let h = |a: usize| at_readout.get(a).unwrap_or(&zero);

    let mut off: f64 = 0.0;
    let mut diag: f64 = 0.0;
    for (a, v) in at_readout.iter().enumerate() {
        for (b, p) in r.iter().enumerate() {
            let rv = p * v;
            if a == b {
                diag = diag.max((rv - v).norm());
            } else {
                off = off.max(rv.norm());
            }
        }
        if a >= r.len() {
            diag = diag.max(v.norm());
        }
    }
    let record: Vec<CVector> = r.iter().map(|p| p * &psi_r).collect();
    let summed = (0..labels).map(|b| (record.get(b).unwrap_or(&zero) - h(b)).norm()).fold(0.0, f64::max);
    let history_probabilities: Vec<f64> = at_readout.iter().map(norm_sqr).collect();
    let record_probabilities: Vec<f64> = record.iter().map(norm_sqr).collect();
    let probability_residual = (0..labels)
        .map(|i| {
            let p = history_probabilities.get(i).copied().unwrap_or(0.0);
            let q = record_probabilities.get(i).copied().unwrap_or(0.0);
            (p - q).abs()
        })
        .fold(0.0, f64::max);
    Ok(CorrelationReport {
        family: family.name.clone(),
        formulation,
        tol,
        pass: off <= tol,
        max_off_correlation: off,
        max_diagonal_defect: diag,
        summed_identity_residual: summed,
        supported: history_probabilities.iter().filter(|&&p| p > tol * tol).count(),
        record_sum_residual: (record_probabilities.iter().sum::<f64>() - 1.0).abs(),
        history_probabilities,
        record_probabilities,
        probability_residual,
    })
}

/// Result of testing one record family against both formulations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusivityReport {
    pub family: String,
    pub decoherent: CorrelationReport,
    pub bohmian: CorrelationReport,
    /// `max_a |p_chain(a) - p_t0(a)|`.
    pub max_probability_gap: f64,
    pub probabilities_differ: bool,
    /// False only if the probabilities differ and both conditions hold,
    /// which a correct implementation can never report.
    pub theorem_holds: bool,
}

/// Probability vectors closer than this count as equal.
pub const PROBABILITY_GAP_TOL: f64 = 1e-9;

pub fn exclusivity_check(m: &FiniteModel, family: &RecordFamily, tol: f64) -> Result<ExclusivityReport> {
    let decoherent = verify_record_correlation(m, Formulation::Decoherent, family, tol)?;
    let bohmian = verify_record_correlation(m, Formulation::Bohmian, family, tol)?;
    let gap = decoherent
        .history_probabilities
        .iter()
        .zip(&bohmian.history_probabilities)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    let differ = gap > PROBABILITY_GAP_TOL;
    let both = decoherent.pass && bohmian.pass;
    Ok(ExclusivityReport {
        family: family.name.clone(),
        max_probability_gap: gap,
        probabilities_differ: differ,
        theorem_holds: !(differ && both),
        decoherent,
        bohmian,
    })
}
