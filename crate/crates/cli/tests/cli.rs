use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kppflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kppflow"))
        .args(args)
        .env_remove("KPPFLOW_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn out_dir(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().replace('\\', "/")
}

#[test]
fn shear_diffusivity_sweep_writes_csv_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "out");
    let cfg = write_config(
        tmp.path(),
        "shear.json",
        &format!(
            r#"{{"mode": "diffusivity", "resolution": [32, 32],
                "flow": {{"kind": "shear", "modes": [{{"wavevector": [1], "amplitude": 1, "phase": -1.5707963267948966}}]}},
                "amplitudes": [1, 10, 100], "output_dir": "{out}"}}"#
        ),
    );
    let run = kppflow(&["run", &cfg]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));

    let csv = fs::read_to_string(Path::new(&out).join("diffusivity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "A,D_e,D_e_over_A2,residual,first_integral_residual,h1_dist_to_w0"
    );
    let limit = 1.0 / (8.0 * std::f64::consts::PI.powi(2));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        let a = cols[0];
        assert!((cols[2] - (1.0 / (a * a) + limit)).abs() <= 1e-8 * cols[2]);
    }

    let manifest: Value = serde_json::from_str(&fs::read_to_string(Path::new(&out).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    let listed: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    for name in ["diffusivity.csv", "plots/d_e_over_a2.dat", "plots/index.json"] {
        assert!(listed.contains(&name), "{name} missing from manifest");
    }
}

#[test]
fn identical_configs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for run in ["a", "b"] {
        let out = out_dir(tmp.path(), run);
        let cfg = write_config(
            tmp.path(),
            &format!("{run}.json"),
            &format!(
                r#"{{"mode": "speed", "resolution": [16, 16], "flow": {{"kind": "cellular"}},
                    "amplitudes": [2, 4], "output_dir": "{out}"}}"#
            ),
        );
        assert!(kppflow(&["run", &cfg]).status.success());
        bodies.push(fs::read(Path::new(&out).join("speed.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn validate_mode_on_cellular_flow_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "out");
    let cfg = write_config(
        tmp.path(),
        "val.json",
        &format!(r#"{{"mode": "validate", "resolution": [16, 16], "flow": {{"kind": "cellular"}}, "seed": 3, "output_dir": "{out}"}}"#),
    );
    let run = kppflow(&["run", &cfg]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(Path::new(&out).join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["random_cases"].as_array().unwrap().len(), 3);

    let check = kppflow(&["validate", &cfg]);
    assert_eq!(check.status.code(), Some(0));
}

#[test]
fn reversed_amplitude_range_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"mode": "speed", "resolution": [16, 16], "flow": {"kind": "cellular"},
            "amplitude_range": {"lo": 100, "hi": 1, "count": 4}}"#,
    );
    for cmd in ["run", "validate"] {
        let run = kppflow(&[cmd, &cfg]);
        assert_eq!(run.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&run.stderr).contains("amplitude_range.hi"));
    }
}

#[test]
fn missing_config_is_an_io_error() {
    assert_eq!(kppflow(&["run", "/nonexistent/config.json"]).status.code(), Some(3));
}

#[test]
fn solver_failure_leaves_failed_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "out");
    // Too few trajectory samples for a speed fit.
    let cfg = write_config(
        tmp.path(),
        "sim.json",
        &format!(
            r#"{{"mode": "simulate", "resolution": [8, 8], "flow": {{"kind": "zero"}},
                "simulation": {{"length_periods": 16, "resolution": [8, 8], "t_final": 5}},
                "output_dir": "{out}"}}"#
        ),
    );
    let run = kppflow(&["run", &cfg]);
    assert_eq!(run.status.code(), Some(1));
    let out = Path::new(&out);
    assert!(out.join("FAILED").exists());
    assert!(out.join("trajectory.csv").exists());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
}

#[test]
fn fast_reproduction_skips_fine_grid_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_dir(tmp.path(), "out");
    let run = kppflow(&["reproduce-all", "--fast", "--out", &out]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(run.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().count(), 10);
    let summary: Value = serde_json::from_str(&fs::read_to_string(Path::new(&out).join("summary.json")).unwrap()).unwrap();
    let status: Vec<&str> = summary.as_array().unwrap().iter().map(|o| o["status"].as_str().unwrap()).collect();
    assert!(!status.contains(&"FAIL"));
    assert!(status.contains(&"SKIPPED"));
    assert!(Path::new(&out).join("summary.csv").exists());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    fs::write(&file, "").unwrap();
    let out = file.join("sub");
    let run = kppflow(&["reproduce-all", "--fast", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn bad_worker_override_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let run = Command::new(env!("CARGO_BIN_EXE_kppflow"))
        .args(["reproduce-all", "--fast", "--out", tmp.path().to_str().unwrap()])
        .env("KPPFLOW_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
}
