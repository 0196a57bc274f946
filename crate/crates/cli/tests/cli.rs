use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use histlab::GridSpec;
use histlab_cli::config::{load_input, ExperimentConfig, RunInput};
use histlab_cli::plotdata::emit_plotdata;
use histlab_cli::presets::{experiment, preset, NAMES};
use histlab_cli::run::{run_experiment, RunOptions};
use histlab_cli::CliError;
use tempfile::tempdir;

fn histlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histlab")).args(args).output().unwrap()
}

fn small_single_time() -> ExperimentConfig {
    let mut cfg = experiment("single-time").unwrap();
    cfg.grid = GridSpec::square(64, 8.0).unwrap();
    cfg.ensemble.n = 2000;
    cfg.output.snapshot_points = 16;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, cfg.to_json()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn every_preset_loads_back() {
    let dir = tempdir().unwrap();
    for name in NAMES {
        let p = dir.path().join(format!("{name}.json"));
        let out = histlab(&["preset", name, "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let input = load_input(&p).unwrap();
        match (name, input) {
            ("records-copy" | "records-exclusivity", RunInput::Model(_)) => {}
            (_, RunInput::Experiment(c)) => assert_eq!(c.name, name),
            _ => panic!("{name} loaded as the wrong kind"),
        }
    }
}

#[test]
fn bessw_preset_is_fully_pinned() {
    let cfg = experiment("bessw").unwrap();
    assert_eq!(cfg.grid.points(), &[64, 2048]);
    assert_eq!(cfg.history.partitions.as_ref().map(Vec::len), Some(7));
    assert_eq!(cfg.initial_state.len(), 2);
    assert_eq!(cfg.history.times.len(), 7);
    let json = preset("bessw").unwrap().to_json().unwrap();
    for key in ["\"sigma\"", "\"dt\"", "\"seed\"", "\"side\"", "\"cfl\"", "\"prune\""] {
        assert!(json.contains(key), "{key} missing");
    }
}

#[test]
fn unknown_preset_is_a_config_error() {
    let out = histlab(&["preset", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempdir().unwrap();
    let text = small_single_time().to_json().replacen("\"name\"", "\"nmae\": 1,\n  \"name\"", 1);
    let p = dir.path().join("cfg.json");
    fs::write(&p, text).unwrap();
    let out = histlab(&["run", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cfg.json:3:"), "{err}");
    assert!(err.contains("nmae"), "{err}");
}

#[test]
fn empty_ensemble_is_rejected() {
    let dir = tempdir().unwrap();
    let mut cfg = small_single_time();
    cfg.ensemble.n = 0;
    let out = histlab(&["run", &write_config(dir.path(), &cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty ensemble"));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn branch_guard_exits_with_its_name() {
    let dir = tempdir().unwrap();
    let mut cfg = experiment("two-slit-inconsistent").unwrap();
    cfg.tolerances.tree.max_branches = 4;
    let run_dir = dir.path().join("run");
    let out = histlab(&["run", &write_config(dir.path(), &cfg), "--out", run_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("branch_explosion"));
    assert!(!run_dir.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempdir().unwrap();
    let cfg = small_single_time();
    let a = run_experiment(&cfg, &RunOptions { out: Some(dir.path().join("a")), ..Default::default() }).unwrap();
    let b = run_experiment(&cfg, &RunOptions { out: Some(dir.path().join("b")), ..Default::default() }).unwrap();
    for f in ["dh_probabilities.csv", "bm_probabilities.csv", "decoherence_matrix.csv", "comparison.csv", "packets.csv"]
    {
        assert_eq!(fs::read(a.dir.join(f)).unwrap(), fs::read(b.dir.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_override_and_traj_dump() {
    let dir = tempdir().unwrap();
    let cfg = small_single_time();
    let opts = RunOptions { out: Some(dir.path().join("r")), seed: Some(99), traj_dump: true };
    let r = run_experiment(&cfg, &opts).unwrap();
    assert_eq!(r.bm.seed, 99);
    assert!(r.dir.join("trajectories.csv").is_file());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r.dir.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    for key in ["tree", "eps_consistency", "consistency_min_weight", "advance", "compare", "high_probability"] {
        assert!(!manifest["tolerances"][key].is_null(), "{key}");
    }
    for f in manifest["outputs"].as_array().unwrap() {
        assert!(r.dir.join(f.as_str().unwrap()).is_file(), "{f}");
    }
}

#[test]
fn single_time_run_agrees_and_emits_plot_data() {
    let dir = tempdir().unwrap();
    let r = run_experiment(&small_single_time(), &RunOptions { out: Some(dir.path().join("r")), ..Default::default() })
        .unwrap();
    assert!(r.dh.report.consistent);
    assert_eq!(r.comparison.verdict.as_str(), "agree");
    let files = emit_plotdata(&r.dir).unwrap();
    assert_eq!(files.len(), 4);
    let fig2 = fs::read_to_string(r.dir.join("fig2_dh_squares.csv")).unwrap();
    assert!(fig2.starts_with("rank,label,p,k,t,region,x,y\n"));
    assert!(fig2.lines().count() > 1);
}

#[test]
fn emit_plotdata_lists_missing_files() {
    let dir = tempdir().unwrap();
    match emit_plotdata(dir.path()) {
        Err(CliError::MissingInputs { files, .. }) => assert_eq!(files.len(), 5),
        other => panic!("{other:?}"),
    }
    let out = histlab(&["emit-plotdata", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run_manifest.json"));
}

#[test]
fn finite_model_run_writes_a_report() {
    let dir = tempdir().unwrap();
    let model = dir.path().join("m.json");
    let run_dir = dir.path().join("r");
    assert!(histlab(&["preset", "records-copy", "--out", model.to_str().unwrap()]).status.success());
    let out = histlab(&["run", model.to_str().unwrap(), "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("records_report.json")).unwrap()).unwrap();
    assert_eq!(report["families"][0]["pass"], true);
}
