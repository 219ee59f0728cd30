use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn geomlaw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geomlaw")).args(args).env_remove("GEOMLAW_SEED").output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn error_code(o: &Output) -> String {
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    v["error"]["code"].as_str().unwrap().to_string()
}

#[test]
fn classify_reports_family_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "beta.json", r#"{"role":"beta","values":[1,0.5,0.2]}"#);
    let v = json_out(&geomlaw(&["classify", "--json", f.to_str().unwrap()]));
    assert_eq!(v["family"], "G^{W,X}");
    assert_eq!(v["hankel_extendible"], false);
    assert_eq!(v["in_m"], true);
}

#[test]
fn classify_seq_from_values_and_file() {
    let v = json_out(&geomlaw(&["classify-seq", "--values", "1,0.5,0.25"]));
    assert_eq!(v["hankel_extendible"], true);
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "x.json", "[1, 0.5, 0.2]");
    let v = json_out(&geomlaw(&["classify-seq", "--json", f.to_str().unwrap()]));
    assert_eq!(v["in_m"], true);
    assert_eq!(v["hankel_extendible"], false);
}

#[test]
fn survival_and_pmf() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "n.json", r#"{"family":"narrow","d":2,"params":{"1":0.5,"2":0.6,"3":0.9}}"#);
    let v = json_out(&geomlaw(&["survival", "--params", f.to_str().unwrap(), "--at", "1,2"]));
    assert!((v["survival"].as_f64().unwrap() - 0.5 * 0.36 * 0.81).abs() < 1e-15);
    let v = json_out(&geomlaw(&["pmf", "--params", f.to_str().unwrap(), "--at", "1,1"]));
    // P(tau = (1,1)) = 1 - S(1,0) - S(0,1) + S(1,1).
    let expect = 1.0 - 0.45 - 0.54 + 0.5 * 0.6 * 0.9;
    assert!((v["value"].as_f64().unwrap() - expect).abs() < 1e-15);
    let o = geomlaw(&["survival", "--params", f.to_str().unwrap(), "--at", "1,2,0"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_code(&o), "dimension-mismatch");
}

#[test]
fn missing_keys_and_fill_flags() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "n.json", r#"{"family":"narrow","d":2,"params":{"1":0.5,"2":0.6}}"#);
    let o = geomlaw(&["survival", "--params", f.to_str().unwrap(), "--at", "1,1"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_code(&o), "missing-key");
    let v = json_out(&geomlaw(&["survival", "--fill-narrow-ones", "--params", f.to_str().unwrap(), "--at", "1,1"]));
    assert!((v["survival"].as_f64().unwrap() - 0.3).abs() < 1e-15);
    let bad = write(dir.path(), "b.json", r#"{"family":"narrow","d":2,"params":{"1":1.5,"2":0.6,"3":1}}"#);
    let o = geomlaw(&["survival", "--params", bad.to_str().unwrap(), "--at", "1,1"]);
    assert_eq!(error_code(&o), "range-violation");
}

#[test]
fn convert_between_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "p.json", r#"{"role":"p","values":[0.5,0.8]}"#);
    let v = json_out(&geomlaw(&["convert", "--from", "p", "--to", "beta", "--json", f.to_str().unwrap()]));
    assert_eq!(v["role"], "beta");
    let vals: Vec<f64> = serde_json::from_value(v["values"].clone()).unwrap();
    for (x, y) in vals.iter().zip([1.0, 0.4, 0.2]) {
        assert!((x - y).abs() < 1e-15);
    }
    // Not log-monotone: no narrow representation.
    let b = write(dir.path(), "beta.json", r#"{"role":"beta","values":[1,0.5,0.2]}"#);
    let o = geomlaw(&["convert", "--from", "beta", "--to", "p", "--json", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_code(&o), "not-representable");
    let v = json_out(&geomlaw(&["convert", "--from", "beta", "--to", "ptilde", "--json", b.to_str().unwrap()]));
    assert_eq!(v["role"], "ptilde");
}

#[test]
fn convert_general_laws() {
    let dir = tempfile::tempdir().unwrap();
    let n = write(dir.path(), "n.json", r#"{"family":"narrow","d":2,"params":{"1":0.5,"2":0.6,"3":0.9}}"#);
    let v = json_out(&geomlaw(&["convert", "--from", "narrow", "--to", "wide", "--json", n.to_str().unwrap()]));
    assert_eq!(v["family"], "wide");
    assert!((v["params"]["0"].as_f64().unwrap() - 0.27).abs() < 1e-12);
    let w3 = write(
        dir.path(),
        "w.json",
        r#"{"family":"wide","d":3,"params":{"0":0.3,"1":0.1,"2":0.1,"3":0.1,"4":0.1,"5":0.1,"6":0.1,"7":0.1}}"#,
    );
    let o = geomlaw(&["convert", "--from", "wide", "--to", "narrow", "--json", w3.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_code(&o), "not-representable");
}

#[test]
fn moments_and_extend() {
    let v = json_out(&geomlaw(&["moments", "--law", "gamma", "--shape", "2", "--rate", "3", "--d", "3"]));
    assert_eq!(v["role"], "b");
    let vals: Vec<f64> = serde_json::from_value(v["values"].clone()).unwrap();
    for (x, y) in vals.iter().zip([1.0, 0.5625, 0.36, 0.25]) {
        assert!((x - y).abs() < 1e-15);
    }
    let v = json_out(&geomlaw(&["moments", "--law", "bernoulli", "--q", "0.9", "--level", "1", "--d", "2"]));
    assert_eq!(v["role"], "beta");
    let o = geomlaw(&["moments", "--law", "gamma", "--d", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let row = write(dir.path(), "row.json", r#"{"role":"ptilde","values":[0.2,0.3]}"#);
    let v = json_out(&geomlaw(&["extend", "--json", row.to_str().unwrap()]));
    assert_eq!(v["feasible"], true);
    assert!(v["lower"].as_f64().unwrap().abs() < 1e-15);
    assert!((v["upper"].as_f64().unwrap() - 0.1).abs() < 1e-15);
}

#[test]
fn dependence_report() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "n.json", r#"{"family":"narrow","d":2,"params":{"1":1,"2":1,"3":0.4}}"#);
    let v = json_out(&geomlaw(&["dependence", "--params", f.to_str().unwrap()]));
    assert!((v["corr"][0][1].as_f64().unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(v["mrti"], true);
}

#[test]
fn usage_errors_are_json_with_exit_2() {
    let o = geomlaw(&["survival", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_code(&o), "usage");
    let o = geomlaw(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn every_subcommand_has_an_example() {
    for sub in ["classify-seq", "classify", "survival", "pmf", "sample", "dependence", "moments", "extend", "verify", "convert"] {
        let o = geomlaw(&[sub, "--help"]);
        assert!(o.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Example:"), "{sub}");
    }
}

#[test]
fn sample_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "s.json", r#"{"mixing":{"kind":"point_mass","at":0.5},"d":3}"#);
    let out = dir.path().join("s.csv");
    let v = json_out(&geomlaw(&[
        "sample", "--model", "sieve", "--params", f.to_str().unwrap(), "--n", "100", "--seed", "5", "--out", out.to_str().unwrap(),
    ]));
    assert_eq!(v["seed"], 5);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("tau1,tau2,tau3\n"));
    assert_eq!(csv.lines().count(), 101);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["rng"], "chacha8");
    assert_eq!(meta["model"], "sieve");
    let o = geomlaw(&["sample", "--model", "nope", "--params", f.to_str().unwrap()]);
    assert_eq!(error_code(&o), "unknown-model");
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "g.json", r#"{"law":{"kind":"gamma","shape":2,"rate":3},"d":2}"#);
    let args = ["sample", "--model", "definetti", "--params", f.to_str().unwrap(), "--n", "50"];
    let with_env = Command::new(env!("CARGO_BIN_EXE_geomlaw")).args(args).env("GEOMLAW_SEED", "77").output().unwrap();
    let mut explicit = args.to_vec();
    explicit.extend(["--seed", "77"]);
    let with_flag = geomlaw(&explicit);
    assert!(with_env.status.success() && with_flag.status.success());
    assert_eq!(with_env.stdout, with_flag.stdout);
    assert_ne!(with_env.stdout, geomlaw(&args).stdout);
}

#[test]
fn verify_quick_suite_passes() {
    let o = geomlaw(&["verify", "--suite", "quick", "--seed", "3", "--workers", "2"]);
    let v = json_out(&o);
    assert_eq!(v["passed"], true, "{v}");
    assert!(v["checks"].as_array().unwrap().len() >= 10);
}
