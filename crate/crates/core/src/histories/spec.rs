use std::sync::Arc;

use crate::error::{Error, Result};
use crate::qstate::GridSpec;

use super::partition::RegionPartition;

/// One region label per history time.
pub type HistoryLabel = Vec<u32>;

/// Times `t_1 < ... < t_n` with a partition at each.
#[derive(Clone, Debug, PartialEq)]
pub struct HistorySpec {
    times: Vec<f64>,
    partitions: Vec<Arc<RegionPartition>>,
}

impl HistorySpec {
    pub fn new(times: Vec<f64>, partitions: Vec<Arc<RegionPartition>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("a history needs at least one time"));
        }
        if partitions.len() != times.len() {
            return Err(Error::invalid(format!("{} times but {} partitions", times.len(), partitions.len())));
        }
        let mut prev = 0.0;
        for (k, &t) in times.iter().enumerate() {
            if !(t.is_finite() && t > prev) {
                return Err(Error::invalid(format!(
                    "history times must be positive and strictly increasing (t{} = {t})",
                    k + 1
                )));
            }
            prev = t;
        }
        let grid = partitions[0].grid();
        for p in &partitions[1..] {
            grid.ensure_same(p.grid())?;
        }
        Ok(HistorySpec { times, partitions })
    }

    /// The same partition at every time.
    pub fn repeated(times: Vec<f64>, partition: RegionPartition) -> Result<Self> {
        let p = Arc::new(partition);
        let n = times.len();
        Self::new(times, vec![p; n])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &GridSpec {
        self.partitions[0].grid()
    }

    pub fn partition(&self, k: usize) -> &RegionPartition {
        &self.partitions[k]
    }

    pub fn partitions(&self) -> &[Arc<RegionPartition>] {
        &self.partitions
    }

    /// Region names at every time; two specs with equal label spaces can be
    /// compared label by label.
    pub fn label_space(&self) -> Vec<Vec<String>> {
        self.partitions.iter().map(|p| p.names().to_vec()).collect()
    }

    /// Number of histories, saturating at `usize::MAX`.
    pub fn history_count(&self) -> usize {
        self.partitions.iter().fold(1usize, |acc, p| acc.saturating_mul(p.count()))
    }

    pub fn check_label(&self, alpha: &[u32]) -> Result<()> {
        if alpha.len() != self.len() {
            return Err(Error::invalid(format!("history label has {} entries for {} times", alpha.len(), self.len())));
        }
        for (k, (&a, p)) in alpha.iter().zip(&self.partitions).enumerate() {
            if a as usize >= p.count() {
                return Err(Error::invalid(format!("label {a} at time {} out of range", k + 1)));
            }
        }
        Ok(())
    }

    /// Region names joined by `/`, e.g. `-3:3/-2:2`.
    pub fn format_label(&self, alpha: &[u32]) -> String {
        alpha.iter().zip(&self.partitions).map(|(&a, p)| p.name(a)).collect::<Vec<_>>().join("/")
    }

    pub fn parse_label(&self, s: &str) -> Result<HistoryLabel> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != self.len() {
            return Err(Error::invalid(format!("label {s:?} does not have {} parts", self.len())));
        }
        parts
            .iter()
            .zip(&self.partitions)
            .map(|(n, p)| p.label_by_name(n).ok_or_else(|| Error::invalid(format!("unknown region {n:?}"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histories::partition::{make_partition, PartitionSpec};

    #[test]
    fn validation_and_labels() {
        let g = GridSpec::line(16, 4.0).unwrap();
        let p = make_partition(&g, &PartitionSpec::SquareTiling { side: 1.0, origin: None }).unwrap();
        assert!(HistorySpec::repeated(vec![], p.clone()).is_err());
        assert!(HistorySpec::repeated(vec![0.0, 1.0], p.clone()).is_err());
        assert!(HistorySpec::repeated(vec![1.0, 1.0], p.clone()).is_err());
        let h = HistorySpec::repeated(vec![0.5, 1.0], p).unwrap();
        assert_eq!(h.history_count(), 16);
        let s = h.format_label(&[0, 3]);
        assert_eq!(s, "-2/1");
        assert_eq!(h.parse_label(&s).unwrap(), vec![0, 3]);
        assert!(h.check_label(&[0, 4]).is_err());
        assert!(h.check_label(&[0]).is_err());
    }
}
