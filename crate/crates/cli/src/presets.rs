//! Built-in experiment and model files. Every numeric choice is explicit in
//! the emitted file.

use std::f64::consts::FRAC_1_SQRT_2;

use histlab::bohm::AdvanceOptions;
use histlab::histories::PartitionSpec;
use histlab::records::{build_bessw_analog, build_copy_model, FiniteModel};
use histlab::{GaussianPacket, GridSpec, SystemConfig};

use crate::config::{
    Diagnostics, EnsembleConfig, ExperimentConfig, ExperimentKind, HistoryConfig, OutputConfig, PropagatorConfig,
    StateTerm, Tolerances,
};
use crate::error::{CliError, Result};

pub const NAMES: [&str; 5] = ["bessw", "single-time", "two-slit-inconsistent", "records-copy", "records-exclusivity"];

pub enum Preset {
    Experiment(Box<ExperimentConfig>),
    Model(Box<FiniteModel>),
}

impl Preset {
    pub fn to_json(&self) -> Result<String> {
        match self {
            Preset::Experiment(c) => Ok(c.to_json()),
            Preset::Model(m) => Ok(m.to_json()?),
        }
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "records-copy" => Ok(Preset::Model(Box::new(build_copy_model(2, 2)?))),
        "records-exclusivity" => Ok(Preset::Model(Box::new(build_bessw_analog()?))),
        _ => experiment(name).map(|c| Preset::Experiment(Box::new(c))),
    }
}

fn term(c: [f64; 2], center: [f64; 2], momentum: [f64; 2], sigma: f64) -> StateTerm {
    StateTerm { coefficient: c, packet: GaussianPacket { center: center.to_vec(), momentum: momentum.to_vec(), sigma } }
}

pub fn experiment(name: &str) -> Result<ExperimentConfig> {
    let half = [FRAC_1_SQRT_2, 0.0];
    match name {
        // Two mirror-image packets crossing the line y = 0 diagonally with
        // x-velocity 200, computed in the frame moving with that velocity so
        // the grid can be fine across the fringes and coarse along them. The
        // tilings slide back by one side per time, so the tile names match
        // unit squares of the rest frame centred on the packets.
        "bessw" => {
            let step = 0.005;
            let times = (1..=7).map(|k| (k as f64 - 0.9) * step).collect();
            let partitions = (1..=7)
                .map(|k| PartitionSpec::SquareTiling { side: 1.0, origin: Some(vec![3.5 - k as f64, -0.5]) })
                .collect();
            Ok(ExperimentConfig {
                kind: ExperimentKind::Experiment,
                name: "bessw".into(),
                grid: GridSpec::new(&[64, 2048], &[2.0, 8.0])?,
                system: SystemConfig::free(1.0, 1.0)?,
                initial_state: vec![
                    term(half, [0.0, 3.1], [0.0, -200.0], 0.12),
                    term(half, [0.0, -3.1], [0.0, 200.0], 0.12),
                ],
                history: HistoryConfig { times, partition: None, partitions: Some(partitions) },
                ensemble: EnsembleConfig { n: 100_000, seed: 1 },
                propagator: PropagatorConfig { dt: step / 400.0 },
                tolerances: Tolerances {
                    advance: AdvanceOptions { cfl: 0.75, ..AdvanceOptions::default() },
                    ..Tolerances::default()
                },
                diagnostics: Diagnostics::default(),
                output: OutputConfig { traj_stride: 20, ..OutputConfig::default() },
            })
        }
        // Interfering packets and one history time: the two assignments
        // must agree whatever the time and partition.
        "single-time" => Ok(ExperimentConfig {
            kind: ExperimentKind::Experiment,
            name: "single-time".into(),
            grid: GridSpec::square(256, 8.0)?,
            system: SystemConfig::free(1.0, 1.0)?,
            initial_state: vec![
                term(half, [-1.5, 0.8], [4.0, -2.0], 0.4),
                term([0.0, FRAC_1_SQRT_2], [1.5, 0.8], [-4.0, -2.0], 0.4),
            ],
            history: HistoryConfig {
                times: vec![0.35],
                partition: Some(PartitionSpec::SquareTiling { side: 2.0, origin: None }),
                partitions: None,
            },
            ensemble: EnsembleConfig { n: 100_000, seed: 7 },
            propagator: PropagatorConfig { dt: 0.0025 },
            tolerances: Tolerances::default(),
            diagnostics: Diagnostics::default(),
            output: OutputConfig::default(),
        }),
        // Packets from the two half-planes overlap at the second time and the
        // fine partition there resolves the fringes, so the chains interfere.
        "two-slit-inconsistent" => Ok(ExperimentConfig {
            kind: ExperimentKind::Experiment,
            name: "two-slit-inconsistent".into(),
            grid: GridSpec::square(128, 8.0)?,
            system: SystemConfig::free(1.0, 1.0)?,
            initial_state: vec![term(half, [0.0, 1.5], [0.0, -6.0], 0.3), term(half, [0.0, -1.5], [0.0, 6.0], 0.3)],
            history: HistoryConfig {
                times: vec![0.05, 0.25],
                partition: None,
                partitions: Some(vec![
                    PartitionSpec::HalfPlane { axis: 1, at: 0.0 },
                    PartitionSpec::SquareTiling { side: 0.25, origin: None },
                ]),
            },
            ensemble: EnsembleConfig { n: 20_000, seed: 3 },
            propagator: PropagatorConfig { dt: 0.0025 },
            tolerances: Tolerances::default(),
            diagnostics: Diagnostics::default(),
            output: OutputConfig::default(),
        }),
        _ => Err(CliError::config(format!("unknown preset {name:?}; known presets: {}", NAMES.join(", ")))),
    }
}
