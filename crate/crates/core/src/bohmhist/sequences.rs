use std::io::{BufWriter, Write};

use crate::error::Result;
use crate::fmt::num;
use crate::histories::{HistoryLabel, HistorySpec};

/// A history with its probability, for plotting square sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub label: HistoryLabel,
    pub p: f64,
}

/// Histories with probability at least `min_p`, most probable first; ties
/// keep label order.
pub fn high_probability_sequences(labels: &[HistoryLabel], p: &[f64], min_p: f64) -> Vec<Sequence> {
    let mut out: Vec<Sequence> =
        labels.iter().zip(p).filter(|(_, &p)| p >= min_p).map(|(l, &p)| Sequence { label: l.clone(), p }).collect();
    out.sort_by(|a, b| b.p.total_cmp(&a.p));
    out
}

/// `rank,label,p,k,t,region,x,y` rows, one per history time of every
/// sequence; `(x, y)` is the region centre.
pub fn write_sequences_csv<W: Write>(out: W, seqs: &[Sequence], hist: &HistorySpec) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "rank,label,p,k,t,region,x,y")?;
    let centres: Vec<_> = hist.partitions().iter().map(|p| p.centroids()).collect();
    for (rank, s) in seqs.iter().enumerate() {
        let name = hist.format_label(&s.label);
        for (k, &a) in s.label.iter().enumerate() {
            let c = centres[k][a as usize];
            writeln!(
                w,
                "{rank},{name},{},{},{},{},{},{}",
                num(s.p),
                k + 1,
                num(hist.times()[k]),
                hist.partition(k).name(a),
                num(c[0]),
                num(c[1])
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histories::{make_partition, PartitionSpec};
    use crate::qstate::GridSpec;

    #[test]
    fn filters_and_orders() {
        let labels = vec![vec![0], vec![1], vec![2]];
        let s = high_probability_sequences(&labels, &[0.1, 0.5, 0.4], 0.2);
        assert_eq!(s.iter().map(|s| s.label[0]).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let g = GridSpec::square(64, 8.0).unwrap();
        let spec = PartitionSpec::SquareTiling { side: 1.0, origin: Some(vec![-0.5, -0.5]) };
        let h = HistorySpec::repeated(vec![1.0, 2.0], make_partition(&g, &spec).unwrap()).unwrap();
        let a = h.parse_label("-3:3/-4:0").unwrap();
        let mut buf = Vec::new();
        write_sequences_csv(&mut buf, &[Sequence { label: a, p: 0.5 }], &h).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 3);
        assert!(rows[1].starts_with("0,-3:3/-4:0,5.00000000000e-1,1,"));
        // centre of the tile split by the box edge sits on the edge
        let x: f64 = rows[2].split(',').nth(6).unwrap().parse().unwrap();
        assert!((x.abs() - 4.0).abs() < 0.1, "{x}");
    }
}
