use std::f64::consts::PI;

use num_complex::Complex64;

use super::model::{CMatrix, CVector, FiniteModel, RecordFamily};
use crate::error::{Error, Result};

/// Largest total dimension the builders will construct.
pub const MAX_MODEL_DIM: usize = 4096;

/// System of dimension `k` followed by `n` record registers of dimension `k`.
/// Basis index `s k^n + r_1 k^(n-1) + ... + r_n`.
struct Layout {
    k: usize,
    n: usize,
    dim: usize,
}

impl Layout {
    fn new(k: usize, n: usize) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::invalid("models need at least one outcome and one time"));
        }
        let dim = (0..=n).try_fold(1usize, |acc, _| acc.checked_mul(k).filter(|&d| d <= MAX_MODEL_DIM));
        match dim {
            Some(dim) => Ok(Layout { k, n, dim }),
            None => Err(Error::DimensionGuard(format!("{k}^{} exceeds the {MAX_MODEL_DIM}-dimensional limit", n + 1))),
        }
    }

    /// Digit `pos` of a basis index: 0 is the system, `j` is register `j`.
    fn digit(&self, idx: usize, pos: usize) -> usize {
        (idx / self.k.pow((self.n - pos) as u32)) % self.k
    }

    fn with_digit(&self, idx: usize, pos: usize, v: usize) -> usize {
        let w = self.k.pow((self.n - pos) as u32);
        idx - self.digit(idx, pos) * w + v * w
    }

    /// Diagonal projector onto basis states satisfying `keep`.
    fn diag(&self, keep: impl Fn(usize) -> bool) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for i in (0..self.dim).filter(|&i| keep(i)) {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// `|s><s| (x) I` for every system value, at every history time.
    fn history(&self) -> Vec<Vec<CMatrix>> {
        let fam: Vec<CMatrix> = (0..self.k).map(|a| self.diag(|i| self.digit(i, 0) == a)).collect();
        vec![fam; self.n]
    }

    /// Adds the system value into register `j`.
    fn copy(&self, j: usize) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            let r = (self.digit(i, j) + self.digit(i, 0)) % self.k;
            m[(self.with_digit(i, j, r), i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    fn on_system(&self, w: &CMatrix) -> CMatrix {
        w.kronecker(&CMatrix::identity(self.dim / self.k, self.dim / self.k))
    }

    /// Record projectors: history `beta` is read from register `j` as
    /// `read(j, beta_j)`.
    fn records(&self, name: &str, read: impl Fn(usize, usize) -> usize) -> RecordFamily {
        let count = self.k.pow(self.n as u32);
        let projectors = (0..count)
            .map(|beta| self.diag(|i| (1..=self.n).all(|j| self.digit(i, j) == read(j, self.digit(beta, j)))))
            .collect();
        RecordFamily { name: name.into(), projectors }
    }

    /// `first`, then `w` with a copy before each later history time, and a
    /// final copy before readout.
    fn unitaries(&self, first: &CMatrix, w: &CMatrix) -> Vec<CMatrix> {
        let w = self.on_system(w);
        let mut out = vec![self.on_system(first)];
        for j in 1..self.n {
            out.push(&w * self.copy(j));
        }
        out.push(self.copy(self.n));
        out
    }

    fn state(&self, system: &CVector) -> CVector {
        let mut v = CVector::zeros(self.dim);
        for (s, z) in system.iter().enumerate() {
            v[s * self.dim / self.k] = *z;
        }
        v
    }
}

fn uniform(k: usize) -> CVector {
    CVector::from_element(k, Complex64::new(1.0 / (k as f64).sqrt(), 0.0))
}

/// Unitary DFT times a Zadoff-Chu chirp. It maps every basis state and the
/// uniform state to states of uniform magnitude, so every history of the
/// copy model is equally likely.
fn chirped_dft(k: usize) -> CMatrix {
    let kf = k as f64;
    let c = (k % 2) as f64;
    let norm = 1.0 / kf.sqrt();
    CMatrix::from_fn(k, k, |a, b| {
        let f = Complex64::from_polar(norm, -2.0 * PI * (a * b) as f64 / kf);
        let j = b as f64;
        f * Complex64::from_polar(1.0, -PI * j * (j + c) / kf)
    })
}

/// Ideal measurement of a `k`-outcome system at `n` times: each interval
/// copies the system value into the next register before scrambling the
/// system, and the readout interval makes the last copy. Carries the exact
/// record family `"C"`.
pub fn build_copy_model(k: usize, n: usize) -> Result<FiniteModel> {
    let l = Layout::new(k, n)?;
    let w = chirped_dft(k);
    Ok(FiniteModel {
        initial: l.state(&uniform(k)),
        unitaries: l.unitaries(&w, &w),
        history: l.history(),
        bohm: None,
        records: vec![l.records("C", |_, b| b)],
    })
}

/// Two-outcome, two-time model in which the measured histories cross while
/// the `t = 0` family assigns all weight to the non-crossing ones.
///
/// The system starts in `(|0> + |1>)/sqrt 2` and is flipped between the two
/// history times, so only `(0, 1)` and `(1, 0)` carry weight as chains. The
/// `t = 0` family gives `(0, 0)` and `(1, 1)` one half each. Record family
/// `"C"` reads the registers as written; family `"B"` reads the second
/// register flipped, which tracks the `t = 0` family instead.
pub fn build_bessw_analog() -> Result<FiniteModel> {
    let l = Layout::new(2, 2)?;
    let id = CMatrix::identity(2, 2);
    let x = CMatrix::from_row_slice(
        2,
        2,
        &[Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    );
    let bohm = (0..4)
        .map(|alpha| {
            let (a, b) = (alpha / 2, alpha % 2);
            if a == b {
                l.diag(|i| l.digit(i, 0) == a)
            } else {
                CMatrix::zeros(l.dim, l.dim)
            }
        })
        .collect();
    Ok(FiniteModel {
        initial: l.state(&uniform(2)),
        unitaries: l.unitaries(&id, &x),
        history: l.history(),
        bohm: Some(bohm),
        records: vec![l.records("C", |_, b| b), l.records("B", |j, b| if j == 2 { 1 - b } else { b })],
    })
}

/// Model where the system never moves, so chains and the `t = 0` family
/// `B_(a,...,a) = |a><a|` give the same probabilities and one record family
/// satisfies both correlation conditions.
pub fn build_agreement_model(k: usize, n: usize) -> Result<FiniteModel> {
    let l = Layout::new(k, n)?;
    let id = CMatrix::identity(k, k);
    let count = k.pow(n as u32);
    let bohm = (0..count)
        .map(|alpha| {
            let a = l.digit(alpha, 1);
            if (1..=n).all(|j| l.digit(alpha, j) == a) {
                l.diag(|i| l.digit(i, 0) == a)
            } else {
                CMatrix::zeros(l.dim, l.dim)
            }
        })
        .collect();
    Ok(FiniteModel {
        initial: l.state(&uniform(k)),
        unitaries: l.unitaries(&id, &id),
        history: l.history(),
        bohm: Some(bohm),
        records: vec![l.records("C", |_, b| b)],
    })
}

/// The uninformative family `{I}`.
pub fn trivial_records(dim: usize) -> RecordFamily {
    RecordFamily { name: "trivial".into(), projectors: vec![CMatrix::identity(dim, dim)] }
}
