use std::path::PathBuf;
use std::process::{Command, Output};

fn subflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subflow")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("subflow-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn gen_is_deterministic_per_seed() {
    let a = subflow(&["gen", "sphere-cloud", "--seed", "3", "--n", "20", "--sigma", "0.1"]);
    let b = subflow(&["gen", "sphere-cloud", "--seed", "3", "--n", "20", "--sigma", "0.1"]);
    let c = subflow(&["gen", "sphere-cloud", "--seed", "4", "--n", "20", "--sigma", "0.1"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().lines().count(), 20);
}

#[test]
fn stochastic_verbs_require_a_seed() {
    let out = subflow(&["gen", "s-surface", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2));
    let out = subflow(&["experiment", "distance"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = scratch("codes");
    let cloud = dir.join("cloud.csv");
    let out = subflow(&["gen", "sphere-cloud", "--seed", "1", "--n", "200", "--out", cloud.to_str().unwrap()]);
    assert!(out.status.success());
    let c = cloud.to_str().unwrap();

    let ok = subflow(&["frame", "--cloud", c, "--k", "2", "--alpha", "0.3", "--point", "0,0,1"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let v: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(v["frame"].as_array().unwrap().len(), 2);

    // Wrong dimension: configuration error.
    let bad = subflow(&["frame", "--cloud", c, "--k", "2", "--alpha", "0.3", "--point", "0,1"]);
    assert_eq!(bad.status.code(), Some(2));
    // Far outside the data with a narrow kernel: numerical failure.
    let far = subflow(&["frame", "--cloud", c, "--k", "2", "--alpha", "0.01", "--point", "50,0,0"]);
    assert_eq!(far.status.code(), Some(3), "{}", String::from_utf8_lossy(&far.stderr));
    // Missing input file: I/O error.
    let missing = subflow(&["frame", "--cloud", "/nonexistent/x.csv", "--k", "1", "--point", "0,0,1"]);
    assert_eq!(missing.status.code(), Some(4));
    let unknown = subflow(&["experiment", "nope", "--seed", "0"]);
    assert_eq!(unknown.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn experiment_configs_roundtrip_through_files() {
    let dir = scratch("config");
    let out = subflow(&["experiment", "sphere_curves", "--seed", "5", "--print-config"]);
    assert!(out.status.success());
    let path = dir.join("cfg.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let again = subflow(&[
        "experiment",
        "sphere_curves",
        "--seed",
        "5",
        "--config",
        path.to_str().unwrap(),
        "--print-config",
    ]);
    assert_eq!(out.stdout, again.stdout);
    // A configuration for another experiment is rejected.
    let wrong = subflow(&["experiment", "distance", "--seed", "5", "--config", path.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));
    std::fs::write(&path, b"{\"experiment\": \"sphere_curves\", \"bogus\": 1}").unwrap();
    let junk = subflow(&["experiment", "sphere_curves", "--seed", "5", "--config", path.to_str().unwrap()]);
    assert_eq!(junk.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn experiment_outputs_are_byte_identical_across_runs() {
    let dir = scratch("determinism");
    let cfg = subflow(&["experiment", "surface_smoke", "--seed", "2", "--print-config"]);
    let mut v: serde_json::Value = serde_json::from_slice(&cfg.stdout).unwrap();
    v["data"]["n"] = 600.into();
    v["numeric"]["geodesics"] = 8.into();
    v["numeric"]["delta"] = 0.05.into();
    let path = dir.join("cfg.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.join(run);
        let o = subflow(&[
            "experiment",
            "surface_smoke",
            "--seed",
            "2",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files: Vec<_> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        outputs.push(files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>());
        assert!(out_dir.join("report.json").exists());
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
    std::fs::remove_dir_all(&dir).unwrap();
}
