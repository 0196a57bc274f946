//! Plot-ready tables derived from a finished run directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use histlab::bohmhist::{high_probability_sequences, write_sequences_csv};
use histlab::fmt::num;
use histlab::histories::{HistoryLabel, HistorySpec};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Files a run directory must contain for [`emit_plotdata`].
pub const REQUIRED: [&str; 5] =
    ["run_manifest.json", "dh_probabilities.csv", "bm_probabilities.csv", "packets.csv", "dense_paths.csv"];

pub const OUTPUTS: [&str; 4] = ["fig1_packets.csv", "fig2_dh_squares.csv", "fig3_bm_squares.csv", "traj_sample.csv"];

fn read(dir: &Path, name: &str) -> Result<String> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|e| CliError::io(format!("reading {}", p.display()), e))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    let p = dir.join(name);
    Ok(BufWriter::new(fs::File::create(&p).map_err(|e| CliError::io(format!("writing {}", p.display()), e))?))
}

fn bad(file: &str, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Core(histlab::Error::Format(format!("{file} line {line}: {msg}")))
}

/// Rows of a CSV with a header, as fields indexed by column name.
struct Table {
    file: &'static str,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(file: &'static str, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(file, 1, e))?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .enumerate()
            .map(|(i, rec)| rec.map(|rec| rec.iter().map(str::to_string).collect()).map_err(|e| bad(file, i + 2, e)))
            .collect::<Result<_>>()?;
        Ok(Table { file, header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| bad(self.file, 1, format!("no column {name:?}")))
    }

    fn f64_at(&self, row: usize, col: usize) -> Result<f64> {
        self.rows[row][col].parse().map_err(|e| bad(self.file, row + 2, e))
    }
}

fn probabilities(t: &Table, hist: &HistorySpec) -> Result<(Vec<HistoryLabel>, Vec<f64>)> {
    let (cl, cp) = (t.col("label")?, t.col("p")?);
    let mut labels = Vec::with_capacity(t.rows.len());
    let mut p = Vec::with_capacity(t.rows.len());
    for i in 0..t.rows.len() {
        labels.push(hist.parse_label(&t.rows[i][cl]).map_err(|e| bad(t.file, i + 2, e))?);
        p.push(t.f64_at(i, cp)?);
    }
    Ok((labels, p))
}

/// Write the figure tables into `run_dir`, returning their paths.
pub fn emit_plotdata(run_dir: &Path) -> Result<Vec<PathBuf>> {
    let missing: Vec<String> = REQUIRED.iter().filter(|f| !run_dir.join(f).is_file()).map(|f| f.to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::MissingInputs { dir: run_dir.to_path_buf(), files: missing });
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&read(run_dir, "run_manifest.json")?).map_err(histlab::Error::from)?;
    let cfg_value = manifest
        .get("config")
        .filter(|_| manifest.get("input_kind").and_then(|k| k.as_str()) == Some("experiment"))
        .ok_or_else(|| bad("run_manifest.json", 1, "not an experiment run"))?;
    let cfg = ExperimentConfig::from_json(&cfg_value.to_string())?;
    let hist = cfg.histories()?;
    let min_p = cfg.tolerances.high_probability;

    // packet centres, with the region each one is in at the next history time
    let packets = Table::parse("packets.csv", &read(run_dir, "packets.csv")?)?;
    let (cj, ct, cx, cy) = (packets.col("packet")?, packets.col("t")?, packets.col("x")?, packets.col("y")?);
    let mut w = create(run_dir, OUTPUTS[0])?;
    let io = |e: std::io::Error| CliError::io("writing plot data", e);
    writeln!(w, "packet,t,x,y,region").map_err(io)?;
    for i in 0..packets.rows.len() {
        let t = packets.f64_at(i, ct)?;
        let (x, y) = (packets.f64_at(i, cx)?, packets.f64_at(i, cy)?);
        let k = hist.times().iter().position(|&tk| tk >= t - 1e-12).unwrap_or(hist.len() - 1);
        let part = hist.partition(k);
        let region = part.label_of_point([x, y]).map(|a| part.name(a).to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{region}", packets.rows[i][cj], num(t), num(x), num(y)).map_err(io)?;
    }
    w.flush().map_err(io)?;

    for (src, dst) in [("dh_probabilities.csv", OUTPUTS[1]), ("bm_probabilities.csv", OUTPUTS[2])] {
        let t = Table::parse(src, &read(run_dir, src)?)?;
        let (labels, p) = probabilities(&t, &hist)?;
        let seqs = high_probability_sequences(&labels, &p, min_p);
        write_sequences_csv(create(run_dir, dst)?, &seqs, &hist)?;
    }

    let dense = read(run_dir, "dense_paths.csv")?;
    Table::parse("dense_paths.csv", &dense)?;
    let mut w = create(run_dir, OUTPUTS[3])?;
    w.write_all(dense.as_bytes()).map_err(io)?;
    w.flush().map_err(io)?;

    Ok(OUTPUTS.iter().map(|f| run_dir.join(f)).collect())
}
