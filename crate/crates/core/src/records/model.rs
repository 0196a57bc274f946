use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Default tolerance for unitarity and projector identities.
pub const MODEL_TOL: f64 = 1e-12;

/// A named family of record projectors at the readout time. Projector `b`
/// records history `b` (mixed-radix flat index).
#[derive(Clone, Debug, PartialEq)]
pub struct RecordFamily {
    pub name: String,
    pub projectors: Vec<CMatrix>,
}

/// Closed finite-dimensional system: measured subsystem plus record
/// registers.
///
/// `unitaries[k]` evolves from `t_k` to `t_{k+1}` with `t_0 = 0`; the last
/// one evolves from `t_n` to the readout time `t_R`. History labels are
/// flattened in mixed radix with the first time most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteModel {
    pub initial: CVector,
    pub unitaries: Vec<CMatrix>,
    /// Projector family per history time.
    pub history: Vec<Vec<CMatrix>>,
    /// Optional `t = 0` family, one projector per flat history label,
    /// standing in for the Bohmian history operators.
    pub bohm: Option<Vec<CMatrix>>,
    pub records: Vec<RecordFamily>,
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Worst violation of Hermiticity, idempotence, mutual orthogonality and
/// completeness. Zero projectors are allowed.
pub fn family_defect(family: &[CMatrix], dim: usize) -> f64 {
    let id = CMatrix::identity(dim, dim);
    let mut worst: f64 = 0.0;
    let mut sum = CMatrix::zeros(dim, dim);
    for (i, p) in family.iter().enumerate() {
        worst = worst.max(max_abs(&(p - p.adjoint())));
        worst = worst.max(max_abs(&(p * p - p)));
        for q in &family[i + 1..] {
            worst = worst.max(max_abs(&(p * q)));
        }
        sum += p;
    }
    worst.max(max_abs(&(sum - id)))
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

impl FiniteModel {
    pub fn dim(&self) -> usize {
        self.initial.len()
    }

    pub fn times(&self) -> usize {
        self.history.len()
    }

    /// Outcomes per history time.
    pub fn radices(&self) -> Vec<usize> {
        self.history.iter().map(Vec::len).collect()
    }

    pub fn history_count(&self) -> usize {
        self.history.iter().map(Vec::len).product()
    }

    /// Flat index to per-time labels.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let r = self.radices();
        let mut out = vec![0; r.len()];
        for k in (0..r.len()).rev() {
            out[k] = flat % r[k];
            flat /= r[k];
        }
        out
    }

    pub fn record_family(&self, name: &str) -> Option<&RecordFamily> {
        self.records.iter().find(|f| f.name == name)
    }

    /// Evolution from `t_0` to the readout time.
    pub fn total_evolution(&self) -> CMatrix {
        let d = self.dim();
        self.unitaries.iter().fold(CMatrix::identity(d, d), |acc, u| u * acc)
    }

    /// Evolution from `t_n` to the readout time.
    pub fn readout_evolution(&self) -> &CMatrix {
        self.unitaries.last().expect("validated model has unitaries")
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("model dimension is zero"));
        }
        if (self.initial.norm() - 1.0).abs() > tol {
            return Err(Error::invalid(format!("initial state norm {} is not 1", self.initial.norm())));
        }
        if self.history.is_empty() {
            return Err(Error::invalid("model has no history times"));
        }
        if self.unitaries.len() != self.history.len() + 1 {
            return Err(Error::invalid(format!(
                "{} history times need {} unitaries, got {}",
                self.history.len(),
                self.history.len() + 1,
                self.unitaries.len()
            )));
        }
        let square = |m: &CMatrix| m.nrows() == d && m.ncols() == d;
        for (k, u) in self.unitaries.iter().enumerate() {
            if !square(u) {
                return Err(Error::invalid(format!("unitary {k} is not {d}x{d}")));
            }
            let e = unitarity_defect(u);
            if e > tol {
                return Err(Error::invalid(format!("unitary {k} is off by {e:e}")));
            }
        }
        let check = |what: String, fam: &[CMatrix]| -> Result<()> {
            if fam.is_empty() || !fam.iter().all(square) {
                return Err(Error::invalid(format!("{what}: empty or wrongly sized")));
            }
            let e = family_defect(fam, d);
            if e > tol {
                return Err(Error::invalid(format!("{what} is not a projector family (defect {e:e})")));
            }
            Ok(())
        };
        for (k, fam) in self.history.iter().enumerate() {
            check(format!("history family {}", k + 1), fam)?;
        }
        if let Some(b) = &self.bohm {
            if b.len() != self.history_count() {
                return Err(Error::invalid(format!(
                    "bohm family has {} projectors for {} histories",
                    b.len(),
                    self.history_count()
                )));
            }
            check("bohm family".into(), b)?;
        }
        for f in &self.records {
            check(format!("record family {:?}", f.name), &f.projectors)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RawModel::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawModel = serde_json::from_str(text)?;
        let m = raw.into_model()?;
        m.validate(MODEL_TOL)?;
        Ok(m)
    }
}

type RawMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelKind {
    FiniteModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    name: String,
    projectors: Vec<RawMatrix>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    dim: usize,
    initial: Vec<[f64; 2]>,
    unitaries: Vec<RawMatrix>,
    history: Vec<Vec<RawMatrix>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bohm: Option<Vec<RawMatrix>>,
    #[serde(default)]
    records: Vec<RawFamily>,
}

fn raw(m: &CMatrix) -> RawMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

fn cooked(r: &RawMatrix, dim: usize) -> Result<CMatrix> {
    if r.len() != dim || r.iter().any(|row| row.len() != dim) {
        return Err(Error::invalid(format!("matrix is not {dim}x{dim}")));
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| Complex64::new(r[i][j][0], r[i][j][1])))
}

impl From<&FiniteModel> for RawModel {
    fn from(m: &FiniteModel) -> Self {
        RawModel {
            kind: ModelKind::FiniteModel,
            dim: m.dim(),
            initial: m.initial.iter().map(|z| [z.re, z.im]).collect(),
            unitaries: m.unitaries.iter().map(raw).collect(),
            history: m.history.iter().map(|f| f.iter().map(raw).collect()).collect(),
            bohm: m.bohm.as_ref().map(|f| f.iter().map(raw).collect()),
            records: m
                .records
                .iter()
                .map(|f| RawFamily { name: f.name.clone(), projectors: f.projectors.iter().map(raw).collect() })
                .collect(),
        }
    }
}

impl RawModel {
    fn into_model(self) -> Result<FiniteModel> {
        let d = self.dim;
        if self.initial.len() != d {
            return Err(Error::invalid(format!("initial state has {} entries, dim is {d}", self.initial.len())));
        }
        let fam = |f: &[RawMatrix]| f.iter().map(|m| cooked(m, d)).collect::<Result<Vec<_>>>();
        Ok(FiniteModel {
            initial: CVector::from_iterator(d, self.initial.iter().map(|z| Complex64::new(z[0], z[1]))),
            unitaries: fam(&self.unitaries)?,
            history: self.history.iter().map(|f| fam(f)).collect::<Result<_>>()?,
            bohm: self.bohm.as_deref().map(fam).transpose()?,
            records: self
                .records
                .iter()
                .map(|f| Ok(RecordFamily { name: f.name.clone(), projectors: fam(&f.projectors)? }))
                .collect::<Result<_>>()?,
        })
    }
}
