use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use multispin_core::cli::read_trajectory_csv;
use multispin_core::coherent::GroupId;

fn multispin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multispin")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

const LARMOR: &str = r#"{
  "group": "su2",
  "hamiltonian": [{"coeff": [1.0, 0.0], "factors": [[0, ["Sz"]]]}],
  "initial": [[1.2, 0.3]],
  "dt": 0.001,
  "steps": 2000
}"#;

#[test]
fn simulate_writes_a_readable_deterministic_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "larmor.json", LARMOR);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = multispin(&["simulate", "--config", &cfg, "--output", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());

    let traj = read_trajectory_csv(GroupId::SU2, bytes.as_slice()).unwrap();
    assert_eq!(traj.len(), 2001);
    let phi = traj.final_point()[0].values()[1];
    assert!((phi - 2.3).abs() < 1e-10, "phi = {phi}");
    assert!(traj.max_relative_energy_drift() < 1e-12);
}

#[test]
fn singular_initial_point_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pole.json", &LARMOR.replace("[1.2, 0.3]", "[0.0, 0.3]"));
    let o = multispin(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_configs_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("gen.json", LARMOR.replace("\"Sz\"", "\"Sw\"")),
        ("dt.json", LARMOR.replace("0.001", "-0.001")),
        ("arity.json", LARMOR.replace("[1.2, 0.3]", "[1.2]")),
        ("json.json", "{".to_owned()),
    ] {
        let cfg = write_config(dir.path(), name, &body);
        let o = multispin(&["simulate", "--config", &cfg]);
        assert_eq!(o.status.code(), Some(1), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = multispin(&["simulate", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_passes() {
    let o = multispin(&["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn report_is_reproducible() {
    let a = multispin(&["report", "SU4", "--samples", "20", "--seed", "5"]);
    let b = multispin(&["report", "SU4", "--samples", "20", "--seed", "5"]);
    assert!(a.status.success());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn derive_and_expect_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "larmor.json", LARMOR);
    for cmd in ["derive", "expect"] {
        let o = multispin(&[cmd, "--config", &cfg]);
        assert!(o.status.success(), "{cmd}");
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap();
    }
}
