//! Declarative experiment description.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use histlab::bohm::AdvanceOptions;
use histlab::bohmhist::CompareOptions;
use histlab::histories::{
    make_partition, HistorySpec, PartitionSpec, TreeOptions, DEFAULT_CONSISTENCY_MIN_WEIGHT, DEFAULT_EPS_CONSISTENCY,
};
use histlab::records::FiniteModel;
use histlab::{init_gaussian, superpose, Complex64, GaussianPacket, GridSpec, SystemConfig, WaveFunction};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateTerm {
    /// `[re, im]`.
    pub coefficient: [f64; 2],
    pub packet: GaussianPacket,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryConfig {
    pub times: Vec<f64>,
    /// Partition used at every time, unless `partitions` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionSpec>,
    /// One partition per time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partitions: Option<Vec<PartitionSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorConfig {
    /// Step between the fields that drive the trajectories; every history
    /// time must be a multiple of it.
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tree: TreeOptions,
    pub eps_consistency: f64,
    /// Histories lighter than this are left out of the consistency test.
    pub consistency_min_weight: f64,
    pub advance: AdvanceOptions,
    pub compare: CompareOptions,
    /// Smallest probability listed in the square-sequence plot data.
    pub high_probability: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tree: TreeOptions::default(),
            eps_consistency: DEFAULT_EPS_CONSISTENCY,
            consistency_min_weight: DEFAULT_CONSISTENCY_MIN_WEIGHT,
            advance: AdvanceOptions::default(),
            compare: CompareOptions::default(),
            high_probability: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Diagnostics {
    /// Histogram distance between trajectories and `|psi|^2` at each history
    /// time.
    pub transport: bool,
    /// Continuity-equation residual at half the last history time.
    pub continuity: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Diagnostics { transport: true, continuity: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Run directory; relative paths resolve against the working directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write every trajectory's recorded positions.
    pub trajectories: bool,
    /// Leading trajectories whose paths are kept densely for plotting.
    pub traj_sample: usize,
    /// Propagator steps between dense path points.
    pub traj_stride: usize,
    /// Density snapshots at the history times.
    pub snapshots: bool,
    /// Snapshot grids are block-averaged down to at most this many points
    /// per axis.
    pub snapshot_points: usize,
    /// Times at which each packet's centre is tracked, evenly spaced from 0
    /// to the last history time.
    pub packet_track_points: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            trajectories: false,
            traj_sample: 64,
            traj_stride: 10,
            snapshots: true,
            snapshot_points: 128,
            packet_track_points: 41,
        }
    }
}

/// A full experiment: state, dynamics, histories and outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub system: SystemConfig,
    pub initial_state: Vec<StateTerm>,
    pub history: HistoryConfig,
    pub ensemble: EnsembleConfig,
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Any file `run` accepts.
#[derive(Clone, Debug)]
pub enum RunInput {
    Experiment(Box<ExperimentConfig>),
    Model(Box<FiniteModel>),
}

/// A validation failure with the config key it concerns.
struct Invalid {
    key: &'static str,
    message: String,
}

fn bad(key: &'static str, message: impl Into<String>) -> Invalid {
    Invalid { key, message: message.into() }
}

fn core(key: &'static str) -> impl Fn(histlab::Error) -> Invalid {
    move |e| bad(key, e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::parse(text, None)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text, Some(path))
    }

    fn parse(text: &str, path: Option<&Path>) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| json_error(e, path))?;
        cfg.check().map_err(|inv| CliError::Config {
            path: path.map(Path::to_path_buf),
            line: locate(text, inv.key),
            column: None,
            message: format!("{}: {}", inv.key, inv.message),
        })?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Check every precondition that does not require propagating a state.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|inv| CliError::config(format!("{}: {}", inv.key, inv.message)))
    }

    fn check(&self) -> std::result::Result<(), Invalid> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(bad("name", "must be a non-empty name without path separators"));
        }
        self.system.validate(&self.grid).map_err(core("system"))?;
        if self.initial_state.is_empty() {
            return Err(bad("initial_state", "needs at least one term"));
        }
        for t in &self.initial_state {
            if !t.coefficient.iter().all(|c| c.is_finite()) || t.coefficient == [0.0, 0.0] {
                return Err(bad("coefficient", "coefficients must be finite and non-zero"));
            }
            t.packet.validate(&self.grid).map_err(core("packet"))?;
        }
        self.history_spec()?;
        if self.ensemble.n == 0 {
            return Err(bad("n", histlab::Error::EmptyEnsemble("ensemble size is 0".into()).to_string()));
        }
        let dt = self.propagator.dt;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(bad("dt", "must be positive"));
        }
        for &t in &self.history.times {
            let k = t / dt;
            if (k - k.round()).abs() > 1e-6 {
                return Err(bad("dt", format!("history time {t} is not a multiple of dt = {dt}")));
            }
        }
        let tol = &self.tolerances;
        tol.tree.validate().map_err(core("tree"))?;
        tol.advance.validate().map_err(core("advance"))?;
        if !(tol.eps_consistency.is_finite() && tol.eps_consistency > 0.0) {
            return Err(bad("eps_consistency", "must be positive"));
        }
        if !(tol.consistency_min_weight.is_finite() && tol.consistency_min_weight >= 0.0) {
            return Err(bad("consistency_min_weight", "must be non-negative"));
        }
        if !(tol.compare.abs_tol >= 0.0 && tol.compare.sigmas > 0.0) {
            return Err(bad("compare", "abs_tol must be non-negative and sigmas positive"));
        }
        if !(0.0..=1.0).contains(&tol.high_probability) {
            return Err(bad("high_probability", "must lie in [0, 1]"));
        }
        let out = &self.output;
        if out.traj_stride == 0 {
            return Err(bad("traj_stride", "must be at least 1"));
        }
        if out.snapshot_points == 0 {
            return Err(bad("snapshot_points", "must be at least 1"));
        }
        if out.packet_track_points < 2 {
            return Err(bad("packet_track_points", "must be at least 2"));
        }
        Ok(())
    }

    fn history_spec(&self) -> std::result::Result<HistorySpec, Invalid> {
        let h = &self.history;
        let specs: Vec<PartitionSpec> = match (&h.partition, &h.partitions) {
            (Some(p), None) => vec![p.clone(); h.times.len()],
            (None, Some(ps)) => ps.clone(),
            _ => return Err(bad("history", "give exactly one of `partition` and `partitions`")),
        };
        let mut parts = Vec::with_capacity(specs.len());
        for (k, s) in specs.iter().enumerate() {
            if k > 0 && *s == specs[k - 1] {
                parts.push(Arc::clone(&parts[k - 1]));
            } else {
                parts.push(Arc::new(make_partition(&self.grid, s).map_err(core("partition"))?));
            }
        }
        HistorySpec::new(h.times.clone(), parts).map_err(core("times"))
    }

    /// The history set the config describes.
    pub fn histories(&self) -> Result<HistorySpec> {
        self.history_spec().map_err(|inv| CliError::config(format!("{}: {}", inv.key, inv.message)))
    }

    /// Each normalized packet of the initial state, with its coefficient.
    pub fn packets(&self) -> Result<Vec<(Complex64, WaveFunction)>> {
        self.initial_state
            .iter()
            .map(|t| {
                let psi = init_gaussian(&self.grid, &self.system, &t.packet)?;
                Ok((Complex64::new(t.coefficient[0], t.coefficient[1]), psi))
            })
            .collect()
    }

    /// The normalized initial state.
    pub fn initial_state(&self) -> Result<WaveFunction> {
        let packets = self.packets()?;
        let terms: Vec<(Complex64, &WaveFunction)> = packets.iter().map(|(c, w)| (*c, w)).collect();
        Ok(superpose(&terms)?.psi)
    }
}

/// Read a config or finite-model file, dispatching on its `kind`.
pub fn load_input(path: &Path) -> Result<RunInput> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| json_error(e, Some(path)))?;
    match value.get("kind").and_then(|k| k.as_str()) {
        Some("experiment") => Ok(RunInput::Experiment(Box::new(ExperimentConfig::parse(&text, Some(path))?))),
        Some("finite_model") => FiniteModel::from_json(&text).map(|m| RunInput::Model(Box::new(m))).map_err(|e| {
            CliError::Config { path: Some(path.to_path_buf()), line: None, column: None, message: e.to_string() }
        }),
        Some(other) => Err(CliError::Config {
            path: Some(path.to_path_buf()),
            line: locate(&text, "kind"),
            column: None,
            message: format!("unknown kind {other:?}; expected \"experiment\" or \"finite_model\""),
        }),
        None => Err(CliError::Config {
            path: Some(path.to_path_buf()),
            line: Some(1),
            column: None,
            message: "missing `kind`".into(),
        }),
    }
}

fn json_error(e: serde_json::Error, path: Option<&Path>) -> CliError {
    CliError::Config {
        path: path.map(Path::to_path_buf),
        line: Some(e.line()),
        column: Some(e.column()),
        message: e.to_string(),
    }
}

/// 1-based line of the first occurrence of `"key"`.
fn locate(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn presets_round_trip_and_validate() {
        for name in ["bessw", "single-time", "two-slit-inconsistent"] {
            let cfg = presets::experiment(name).unwrap();
            cfg.validate().unwrap();
            let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_a_line() {
        let text =
            presets::experiment("single-time").unwrap().to_json().replacen("\"name\"", "\"colour\": 1,\n  \"name\"", 1);
        match ExperimentConfig::from_json(&text) {
            Err(CliError::Config { line: Some(l), message, .. }) => {
                assert!(message.contains("colour"), "{message}");
                assert_eq!(l, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let mut cfg = presets::experiment("single-time").unwrap();
        cfg.ensemble.n = 0;
        let text = cfg.to_json();
        match ExperimentConfig::from_json(&text) {
            Err(CliError::Config { line: Some(l), message, .. }) => {
                assert!(message.contains("empty ensemble"), "{message}");
                assert!(text.lines().nth(l - 1).unwrap().contains("\"n\""));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn off_lattice_time_is_rejected() {
        let mut cfg = presets::experiment("single-time").unwrap();
        cfg.history.times = vec![cfg.propagator.dt * 10.5];
        assert!(cfg.validate().is_err());
    }
}
