//! Executing an experiment and writing its run directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use histlab::bohm::{
    advance_ensemble_observed, continuity_residual, io::write_dense_csv, io::write_trajectories_csv, sample_initial,
    transport_distance, EnsembleSummary, TrajectoryEnsemble,
};
use histlab::bohmhist::{bm_probabilities, compare, BohmHistogram, ComparisonReport};
use histlab::fmt::num;
use histlab::histories::{decoherence_matrix, dh_probabilities, DhTable, HistorySpec, PruneStats};
use histlab::records::{exclusivity_check, FiniteModel, MODEL_TOL};
use histlab::{position_density, Propagator, WaveFunction};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RunInput};
use crate::error::{CliError, Result};

/// Overrides that come from the command line rather than the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub traj_dump: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPoint {
    pub t: f64,
    pub tv_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityPoint {
    pub t: f64,
    pub dt: f64,
    pub residual: f64,
}

/// Numerical health of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub ensemble: EnsembleSummary,
    pub node_rescued_fraction: f64,
    pub transport: Vec<TransportPoint>,
    pub max_transport_tv: Option<f64>,
    pub continuity: Option<ContinuityPoint>,
    pub pruning: PruneStats,
    pub decoherence_total: [f64; 2],
    pub decoherence_hermiticity_error: f64,
    pub norm_drift: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timings {
    pub decoherence_s: f64,
    pub trajectories_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub input_kind: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub threads: usize,
    /// Every threshold the run used, defaults included.
    pub tolerances: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_time: Timings,
    pub summary: serde_json::Value,
}

/// Everything a finished experiment produced, for in-process callers.
pub struct RunResult {
    pub dir: PathBuf,
    pub hist: HistorySpec,
    pub dh: DhTable,
    pub bm: BohmHistogram,
    pub comparison: ComparisonReport,
    pub diagnostics: RunDiagnostics,
    pub ensemble: TrajectoryEnsemble,
    pub timings: Timings,
}

pub enum RunOutcome {
    Experiment(Box<RunResult>),
    Model { dir: PathBuf, report: serde_json::Value },
}

pub fn run_input(input: RunInput, opts: &RunOptions) -> Result<RunOutcome> {
    match input {
        RunInput::Experiment(cfg) => run_experiment(&cfg, opts).map(|r| RunOutcome::Experiment(Box::new(r))),
        RunInput::Model(m) => {
            let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("runs/finite_model"));
            let report = run_model(&m, &dir)?;
            Ok(RunOutcome::Model { dir, report })
        }
    }
}

/// Run directory for `cfg` under `opts`.
pub fn output_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| Path::new("runs").join(&cfg.name))
}

fn io_err(what: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(format!("writing {}", what.display()), e)
}

/// Files are written into a sibling staging directory that replaces `dir`
/// only when complete.
struct Staging {
    dir: PathBuf,
    tmp: PathBuf,
    files: Vec<String>,
}

impl Staging {
    fn new(dir: &Path) -> Result<Self> {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let tmp = parent.join(format!(".{name}.partial-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
        }
        fs::create_dir_all(&tmp).map_err(io_err(&tmp))?;
        Ok(Staging { dir: dir.to_path_buf(), tmp, files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.tmp.join(name);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p).map_err(io_err(p))?;
        }
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(&path).map_err(io_err(&path))?))
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush().map_err(io_err(&self.tmp.join(name)))
    }

    fn commit(self) -> Result<PathBuf> {
        if self.dir.exists() {
            let old = self.tmp.with_extension("old");
            fs::rename(&self.dir, &old).map_err(io_err(&self.dir))?;
            fs::rename(&self.tmp, &self.dir).map_err(io_err(&self.dir))?;
            fs::remove_dir_all(&old).map_err(io_err(&old))?;
        } else {
            fs::rename(&self.tmp, &self.dir).map_err(io_err(&self.dir))?;
        }
        Ok(self.dir.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.tmp.exists() {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

/// Block-averaged density: at most `max_points` values per axis.
fn write_snapshot<W: Write>(w: &mut W, psi: &WaveFunction, max_points: usize) -> Result<()> {
    let g = psi.grid();
    let d = position_density(psi);
    let block = |n: usize| (n / max_points.min(n)).max(1);
    let (bx, by) = (block(g.nx()), if g.dims() == 2 { block(g.ny()) } else { 1 });
    let (mx, my) = (g.nx() / bx, if g.dims() == 2 { g.ny() / by } else { 1 });
    writeln!(w, "x,y,density").map_err(histlab::Error::from)?;
    for jy in 0..my {
        for jx in 0..mx {
            let mut s = 0.0;
            for iy in jy * by..(jy + 1) * by {
                for ix in jx * bx..(jx + 1) * bx {
                    s += d[g.flat(ix, iy)];
                }
            }
            let x = g.coord(0, jx * bx) + 0.5 * (bx - 1) as f64 * g.spacing(0);
            let y = if g.dims() == 2 { g.coord(1, jy * by) + 0.5 * (by - 1) as f64 * g.spacing(1) } else { 0.0 };
            writeln!(w, "{},{},{}", num(x), num(y), num(s / (bx * by) as f64)).map_err(histlab::Error::from)?;
        }
    }
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunResult> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.ensemble.seed = s;
    }
    if opts.traj_dump {
        cfg.output.trajectories = true;
    }
    cfg.validate()?;
    let dir = output_dir(&cfg, opts);
    let hist = cfg.histories()?;
    let sys = cfg.system.clone();
    let psi0 = cfg.initial_state()?;
    let prop = Propagator::new(&cfg.grid, &sys)?;
    let tol = &cfg.tolerances;
    let mut stage = Staging::new(&dir)?;

    // decoherent histories
    let t_dh = Instant::now();
    let d = decoherence_matrix(&psi0, &prop, &hist, &tol.tree)?;
    let dh = dh_probabilities(&d, &hist, tol.eps_consistency, tol.consistency_min_weight)?;
    let decoherence_s = t_dh.elapsed().as_secs_f64();
    stage.write("dh_probabilities.csv", |w| Ok(dh.write_csv(w, &hist)?))?;
    stage.write("decoherence_matrix.csv", |w| Ok(d.write_csv(w, &hist)?))?;

    // trajectories
    let t_bm = Instant::now();
    let dt = cfg.propagator.dt;
    let t_last = *hist.times().last().unwrap();
    let steps = (t_last / dt).round() as usize;
    let ens0 = sample_initial(&psi0, cfg.ensemble.n, cfg.ensemble.seed)?;
    let stream = prop.stream(&psi0, dt, steps)?;
    let mut advance = tol.advance.clone();
    advance.dense_count = cfg.output.traj_sample;
    advance.dense_stride = cfg.output.traj_stride;
    let mut transport = Vec::new();
    let mut snapshots = Vec::new();
    let mut norm_drift: f64 = 0.0;
    let ens = advance_ensemble_observed(&ens0, stream, &sys, dt, hist.times(), &advance, |ev| {
        norm_drift = norm_drift.max((ev.psi.norm_sqr() - 1.0).abs());
        if cfg.diagnostics.transport {
            transport.push(TransportPoint { t: ev.time, tv_distance: transport_distance(ev.positions, ev.psi)? });
        }
        if cfg.output.snapshots {
            let mut buf = Vec::new();
            write_snapshot(&mut buf, ev.psi, cfg.output.snapshot_points).map_err(|e| match e {
                CliError::Core(c) => c,
                other => histlab::Error::Format(other.to_string()),
            })?;
            snapshots.push(buf);
        }
        Ok(())
    })?;
    let bm = bm_probabilities(&ens, &hist)?;
    let trajectories_s = t_bm.elapsed().as_secs_f64();

    let continuity = if cfg.diagnostics.continuity {
        let k_mid = (steps / 2).max(1);
        let t_mid = k_mid as f64 * dt;
        let fields: Vec<WaveFunction> = (k_mid - 1..=k_mid + 1)
            .map(|k| prop.evolve_for(&psi0, k as f64 * dt, tol.tree.max_dt))
            .collect::<histlab::Result<_>>()?;
        let r = continuity_residual([&fields[0], &fields[1], &fields[2]], &sys, advance.eps_node_rel)?;
        Some(ContinuityPoint { t: t_mid, dt, residual: r })
    } else {
        None
    };

    let comparison = compare(&dh, &bm, &hist, &tol.compare)?;
    let summary = EnsembleSummary::of(&ens);
    let diagnostics = RunDiagnostics {
        node_rescued_fraction: summary.node_rescued as f64 / summary.n as f64,
        ensemble: summary,
        max_transport_tv: transport.iter().map(|p| p.tv_distance).reduce(f64::max),
        transport,
        continuity,
        pruning: d.pruned().clone(),
        decoherence_total: [d.total().re, d.total().im],
        decoherence_hermiticity_error: d.hermiticity_error(),
        norm_drift,
    };

    stage.write("bm_probabilities.csv", |w| Ok(bm.write_csv(w, &hist)?))?;
    stage.write("comparison.csv", |w| Ok(comparison.write_csv(w)?))?;
    stage.write("comparison.json", |w| {
        Ok(serde_json::to_writer_pretty(w, &comparison).map_err(histlab::Error::from)?)
    })?;
    stage.write("diagnostics.json", |w| {
        Ok(serde_json::to_writer_pretty(w, &diagnostics).map_err(histlab::Error::from)?)
    })?;
    if cfg.output.trajectories {
        stage.write("trajectories.csv", |w| Ok(write_trajectories_csv(w, &ens, None)?))?;
    }
    if cfg.output.traj_sample > 0 {
        stage.write("dense_paths.csv", |w| Ok(write_dense_csv(w, &ens)?))?;
    }
    for (k, buf) in snapshots.iter().enumerate() {
        stage.write(&format!("snapshots/density_t{}.csv", k + 1), |w| {
            w.write_all(buf).map_err(histlab::Error::from)?;
            Ok(())
        })?;
    }
    write_packet_tracks(&mut stage, &cfg, &prop, t_last)?;

    let timings = Timings { decoherence_s, trajectories_s, total_s: start.elapsed().as_secs_f64() };
    let manifest = Manifest {
        tool: "histlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input_kind: "experiment".into(),
        config: serde_json::to_value(&cfg).map_err(histlab::Error::from)?,
        seed: Some(cfg.ensemble.seed),
        threads: rayon::current_num_threads(),
        tolerances: serde_json::json!({
            "tree": tol.tree,
            "eps_consistency": tol.eps_consistency,
            "consistency_min_weight": tol.consistency_min_weight,
            "advance": advance,
            "compare": tol.compare,
            "high_probability": tol.high_probability,
            "cancellation_floor": 1e-8,
            "transport_bins_per_axis": histlab::bohm::diagnostics::TRANSPORT_BINS,
            "time_match_rel": 1e-9,
        }),
        outputs: {
            let mut o = stage.files.clone();
            o.push("run_manifest.json".into());
            o
        },
        wall_time: timings.clone(),
        summary: serde_json::json!({
            "verdict": comparison.verdict,
            "dh_consistent": dh.report.consistent,
            "max_diff": comparison.max_diff,
            "histories_with_dh_weight": dh.labels.len(),
            "histories_with_bm_weight": bm.labels.len(),
        }),
    };
    stage.write("run_manifest.json", |w| {
        Ok(serde_json::to_writer_pretty(w, &manifest).map_err(histlab::Error::from)?)
    })?;
    let dir = stage.commit()?;
    Ok(RunResult { dir, hist, dh, bm, comparison, diagnostics, ensemble: ens, timings })
}

/// Centre of each packet evolved on its own, at evenly spaced times.
fn write_packet_tracks(stage: &mut Staging, cfg: &ExperimentConfig, prop: &Propagator, t_last: f64) -> Result<()> {
    let packets = cfg.packets()?;
    let n = cfg.output.packet_track_points;
    let mut rows = Vec::new();
    for (j, (_, psi)) in packets.iter().enumerate() {
        for i in 0..n {
            let t = t_last * i as f64 / (n - 1) as f64;
            let c = prop.evolve_for(psi, t, cfg.tolerances.tree.max_dt)?.periodic_mean_position();
            rows.push((j, t, c));
        }
    }
    stage.write("packets.csv", |w| {
        writeln!(w, "packet,t,x,y").map_err(histlab::Error::from)?;
        for (j, t, c) in rows {
            writeln!(w, "{j},{},{},{}", num(t), num(c[0]), num(c[1])).map_err(histlab::Error::from)?;
        }
        Ok(())
    })
}

/// Test every record family of a finite model against both formulations and
/// write `records_report.json`.
pub fn run_model(m: &FiniteModel, dir: &Path) -> Result<serde_json::Value> {
    m.validate(MODEL_TOL)?;
    let start = Instant::now();
    let mut families = Vec::new();
    for f in &m.records {
        if m.bohm.is_some() {
            families.push(serde_json::to_value(exclusivity_check(m, f, MODEL_TOL)?).map_err(histlab::Error::from)?);
        } else {
            let r = histlab::records::verify_record_correlation(
                m,
                histlab::records::Formulation::Decoherent,
                f,
                MODEL_TOL,
            )?;
            families.push(serde_json::to_value(r).map_err(histlab::Error::from)?);
        }
    }
    let report = serde_json::json!({
        "dim": m.dim(),
        "times": m.times(),
        "histories": m.history_count(),
        "tol": MODEL_TOL,
        "families": families,
    });
    let mut stage = Staging::new(dir)?;
    stage.write("records_report.json", |w| {
        Ok(serde_json::to_writer_pretty(w, &report).map_err(histlab::Error::from)?)
    })?;
    let manifest = Manifest {
        tool: "histlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input_kind: "finite_model".into(),
        config: serde_json::from_str(&m.to_json()?).map_err(histlab::Error::from)?,
        seed: None,
        threads: rayon::current_num_threads(),
        tolerances: serde_json::json!({
            "model_tol": MODEL_TOL,
            "probability_gap_tol": histlab::records::PROBABILITY_GAP_TOL,
        }),
        outputs: vec!["records_report.json".into(), "run_manifest.json".into()],
        wall_time: Timings { decoherence_s: 0.0, trajectories_s: 0.0, total_s: start.elapsed().as_secs_f64() },
        summary: serde_json::Value::Null,
    };
    stage.write("run_manifest.json", |w| {
        Ok(serde_json::to_writer_pretty(w, &manifest).map_err(histlab::Error::from)?)
    })?;
    stage.commit()?;
    Ok(report)
}
