use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use super::ensemble::{TrajStatus, TrajectoryEnsemble};
use crate::error::Result;
use crate::fmt::num;

/// Counts that characterize an integrated ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n: usize,
    pub seed: u64,
    pub node_rescued: usize,
    pub escaped: usize,
    /// Trajectories whose symmetry-axis coordinate changed sign, node-rescued
    /// ones excluded.
    pub crossings: usize,
    pub crossings_including_rescued: usize,
}

impl EnsembleSummary {
    pub fn of(ens: &TrajectoryEnsemble) -> Self {
        EnsembleSummary {
            n: ens.len(),
            seed: ens.seed(),
            node_rescued: ens.count_status(TrajStatus::NodeRescued),
            escaped: ens.count_status(TrajStatus::Escaped),
            crossings: ens.crossing_count(false),
            crossings_including_rescued: ens.crossing_count(true),
        }
    }
}

/// `id,t,x,y,status` rows: the initial point and every record of each
/// trajectory. `ids` selects trajectories; `None` writes all of them.
pub fn write_trajectories_csv<W: Write>(out: W, ens: &TrajectoryEnsemble, ids: Option<&[usize]>) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "id,t,x,y,status")?;
    let all: Vec<usize>;
    let ids = match ids {
        Some(ids) => ids,
        None => {
            all = (0..ens.len()).collect();
            &all
        }
    };
    for &i in ids {
        let status = ens.status()[i].as_str();
        let mut row = |t: f64, p: [f64; 2]| writeln!(w, "{i},{},{},{},{status}", num(t), num(p[0]), num(p[1]));
        row(ens.start_time(), ens.initial()[i])?;
        for (r, t) in ens.record_times().iter().enumerate() {
            row(*t, ens.records()[r][i])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Dense paths as `id,t,x,y` rows.
pub fn write_dense_csv<W: Write>(out: W, ens: &TrajectoryEnsemble) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "id,t,x,y")?;
    let d = ens.dense();
    let n = d.positions.first().map_or(0, |p| p.len());
    for i in 0..n {
        for (t, pts) in d.times.iter().zip(&d.positions) {
            writeln!(w, "{i},{},{},{}", num(*t), num(pts[i][0]), num(pts[i][1]))?;
        }
    }
    w.flush()?;
    Ok(())
}
