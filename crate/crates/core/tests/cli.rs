use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bihj::config::ScenarioConfig;

fn bihj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bihj"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Coarse, but fine enough for the built-in quality checks.
fn small_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::gaussian();
    cfg.grid.n_points = 1024;
    cfg.time.dt_solver = 5e-3;
    cfg.time.dt_fields = 2.5e-2;
    cfg.time.t_final = 0.25;
    cfg.labels.count = 21;
    cfg
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> PathBuf {
    let path = dir.join("scenario.json");
    fs::write(&path, cfg.to_json()).unwrap();
    path
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_writes_fields_trajectories_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let o = bihj(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<_> = read_dir_sorted(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["fields.csv", "manifest.json", "trajectories.csv"]);

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["all_passed"], true);
    let echoed: ScenarioConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(echoed, small_config());

    let fields = fs::read_to_string(out.join("fields.csv")).unwrap();
    let header = fields.lines().next().unwrap();
    assert!(header.starts_with("time,x,rho"), "{header}");
    assert!(!fields.contains('\r'));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config());
    let cfg = cfg.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = bihj(&[
            "compose",
            "--case",
            "ii",
            "--config",
            cfg,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(
            o.status.code().is_some_and(|c| c <= 1),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
}

#[test]
fn too_few_grid_points_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.grid.n_points = 8;
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = bihj(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("n_points"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_subcommand_arguments_are_rejected() {
    let o = bihj(&["compose", "--case", "iii", "--config", "x.json"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("converse"));
}

#[test]
fn oracle_command_prints_closed_form_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &ScenarioConfig::gaussian());
    let out = tmp.path().join("out");
    let o = bihj(&[
        "oracle",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("oracle.csv")).unwrap();
    assert!(csv.lines().count() > 5);
}

#[test]
fn output_dir_from_config_is_used() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    let target = tmp.path().join("from_config");
    cfg.output_dir = Some(target.to_string_lossy().into_owned());
    let path = write_config(tmp.path(), &cfg);
    let o = bihj(&["figure", "--id", "fig2", "--config", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(target.join("fig2.csv").exists());
}
