//! End-to-end checks of the command-line surface: artifacts, exit codes,
//! config validation.

use std::path::Path;
use std::process::Command;

fn mnls() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mnls"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SCALAR_GS: &str = r#"
[grid]
points = [512]
box_length = [40.0]

[model]
p = 1.0
coupling = [[1.0]]

[constraint]
kind = "total-mass"
values = [4.0]
"#;

#[test]
fn groundstate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gs.toml");
    write(&cfg, SCALAR_GS);
    let out = dir.path().join("out");
    let status = mnls()
        .args(["groundstate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["result.json", "convergence.csv", "minimizer.mnls", "boundstate.mnls"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    let energy = result["minimizer"]["report"]["energy"].as_f64().unwrap();
    assert!((energy + 2.0 / 3.0).abs() < 1e-6, "energy {energy}");
    // convergence history is a CSV with a header and rows
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("iteration,energy,constraint_residual,stationarity_residual"));
    assert!(csv.lines().count() > 1);
}

#[test]
fn evolve_roundtrips_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gs.toml");
    write(&cfg, SCALAR_GS);
    let out1 = dir.path().join("gs_out");
    assert!(mnls()
        .args(["groundstate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out1)
        .status()
        .unwrap()
        .success());

    let evolve_cfg = dir.path().join("ev.toml");
    write(
        &evolve_cfg,
        &format!(
            r#"
[grid]
points = [512]
box_length = [40.0]

[model]
p = 1.0
coupling = [[1.0]]

[stepper]
dt = 1e-3
t_end = 0.5
record_stride = 25

[evolve]
initial = "snapshot"
snapshot = "{}"
"#,
            out1.join("boundstate.mnls").display()
        ),
    );
    let out2 = dir.path().join("ev_out");
    let output = mnls()
        .args(["evolve", "--config"])
        .arg(&evolve_cfg)
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let trace = std::fs::read_to_string(out2.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,mass_1,energy,pohozaev,variance,gradient_norm"));
    assert!(trace.lines().count() > 10);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["blowup_detected"], serde_json::json!(false));
    assert!(summary["mass_drift"].as_f64().unwrap() < 1e-10);
    assert!(out2.join("final.mnls").exists());
}

#[test]
fn blowup_pass_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("blow.toml");
    write(
        &cfg,
        r#"
[grid]
points = [512]
box_length = [40.0]

[model]
p = 3.0
coupling = [[1.0]]

[stepper]
dt = 1e-3
t_end = 10.0
dt_min = 1e-5
blowup_gradient_factor = 30.0
tail_tolerance = 1e-4
record_stride = 10

[experiment]
kind = "supercritical-blowup"
lambda = 1.1
"#,
    );
    let out = dir.path().join("out");
    let output = mnls()
        .args(["blowup", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["verdict"], serde_json::json!("Pass"));
    assert!(out.join("trace.csv").exists());
    assert!(out.join("groundstate.mnls").exists());
}

#[test]
fn identities_and_gn_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("id.toml");
    write(
        &cfg,
        r#"
[grid]
points = [512]
box_length = [40.0]

[model]
p = 1.0
coupling = [[1.0]]

[experiment]
kind = "identities"
random_fields = 60
"#,
    );
    assert_eq!(
        mnls().args(["identities", "--config"]).arg(&cfg).status().unwrap().code(),
        Some(0)
    );
    let gn = dir.path().join("gn.toml");
    write(
        &gn,
        r#"
[grid]
points = [512]
box_length = [40.0]

[model]
p = 1.0
coupling = [[1.0]]

[experiment]
kind = "gn"
random_fields = 120
"#,
    );
    assert_eq!(
        mnls().args(["gn-check", "--config"]).arg(&gn).status().unwrap().code(),
        Some(0)
    );
}

#[test]
fn sweep_aggregates_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    write(
        &dir.path().join("gn.toml"),
        r#"
[grid]
points = [512]
box_length = [40.0]

[model]
p = 1.0
coupling = [[1.0]]

[experiment]
kind = "gn"
random_fields = 40
"#,
    );
    write(
        &dir.path().join("blow.toml"),
        r#"
[grid]
points = [512]
box_length = [40.0]

[model]
p = 3.0
coupling = [[1.0]]

[stepper]
dt = 1e-3
t_end = 10.0
dt_min = 1e-5
blowup_gradient_factor = 30.0
tail_tolerance = 1e-4

[experiment]
kind = "supercritical-blowup"
lambda = 1.1
"#,
    );
    let sweep = dir.path().join("sweep.toml");
    write(
        &sweep,
        r#"
[[jobs]]
name = "gn"
config = "gn.toml"

[[jobs]]
name = "blow"
config = "blow.toml"
"#,
    );
    let out = dir.path().join("runs");
    let output = mnls()
        .args(["sweep", "--config"])
        .arg(&sweep)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("gn").join("summary.json").exists());
    assert!(out.join("blow").join("summary.json").exists());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("gn: pass"));
    assert!(text.contains("blow: pass"));
}

#[test]
fn usage_errors_exit_three() {
    // unknown flag
    let code = mnls().arg("--nonsense").status().unwrap().code();
    assert_eq!(code, Some(3));
    // missing config file
    let code = mnls()
        .args(["groundstate", "--config", "/nonexistent/x.toml"])
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(3));
    // experiment kind does not match the subcommand
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(
        &cfg,
        r#"
[model]
p = 1.0
coupling = [[1.0]]

[experiment]
kind = "gn"
"#,
    );
    let code = mnls()
        .args(["stability", "--config"])
        .arg(&cfg)
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(3));
    // blow-up experiment in the wrong regime
    let wrong = dir.path().join("wrong.toml");
    write(
        &wrong,
        r#"
[model]
p = 1.0
coupling = [[1.0]]

[experiment]
kind = "supercritical-blowup"
lambda = 1.1
"#,
    );
    let code = mnls()
        .args(["blowup", "--config"])
        .arg(&wrong)
        .status()
        .unwrap()
        .code();
    assert_eq!(code, Some(3));
}
