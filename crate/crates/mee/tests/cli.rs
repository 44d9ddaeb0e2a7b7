use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hmm-mee"));
    c.env_remove("HMM_MEE_THREADS");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Example 1 with a step size the descent converges under in 10^4 steps.
fn example1_fast(dir: &Path) -> PathBuf {
    let mut cfg = read_json(&configs().join("example1.json"));
    cfg["estimator"]["step_size"] = 0.05.into();
    let path = dir.join("example1_fast.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_reproducible_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("example1.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b)]);
    let text = fs::read_to_string(a.join("signals.csv")).unwrap();
    assert_eq!(text.lines().count(), 100_001);
    let ma = read_json(&a.join("metadata.json"));
    let mb = read_json(&b.join("metadata.json"));
    assert_eq!(ma["data_sha256"], mb["data_sha256"]);
    assert_eq!(ma["model_hash"].as_str().unwrap().len(), 64);
    assert_eq!(ma["seed"], 20240601);

    let c = dir.path().join("c");
    ok(&["simulate", "--config", s(&cfg), "--seed", "1", "--out", s(&c)]);
    assert_ne!(read_json(&c.join("metadata.json"))["data_sha256"], ma["data_sha256"]);
}

#[test]
fn zero_length_simulation_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = read_json(&configs().join("example1.json"));
    cfg["simulation"]["n"] = 0.into();
    let path = dir.path().join("bad.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = run(&["simulate", "--config", s(&path), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    cfg.as_object_mut().unwrap().remove("simulation");
    fs::write(&path, cfg.to_string()).unwrap();
    let out = run(&["simulate", "--config", s(&path), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulation"));
}

#[test]
fn example1_pipeline_recovers_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example1_fast(dir.path());
    let sim = dir.path().join("sim");
    let est = dir.path().join("est");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    ok(&["estimate", "--config", s(&cfg), "--data", s(&sim.join("signals.csv")), "--out", s(&est)]);
    let report = read_json(&est.join("estimate.json"));
    let theta = floats(&report["theta_hat"]);
    for (a, b) in theta.iter().zip([0.7, 0.6, 2.5, 0.5]) {
        assert!((a - b).abs() < 0.03, "{theta:?}");
    }
    assert_eq!(report["mode"], "counts");
    let trace = fs::read_to_string(est.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,grad_norm,projected,relative_entropy,p1_2,p2_1,beta1,beta2"));
}

#[test]
fn example2_pipeline_recovers_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("example2.json");
    let sim = dir.path().join("sim");
    let est = dir.path().join("est");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    ok(&["estimate", "--config", s(&cfg), "--data", s(&sim.join("signals.csv")), "--out", s(&est)]);
    let theta = floats(&read_json(&est.join("estimate.json"))["theta_hat"]);
    for (a, b) in theta.iter().zip([0.8, 0.7, 0.0, 3.0]) {
        assert!((a - b).abs() < 0.05, "{theta:?}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("example2.json");
    let sim = dir.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let data = sim.join("signals.csv");
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    ok(&["--threads", "1", "estimate", "--config", s(&cfg), "--data", s(&data), "--out", s(&one)]);
    let out = bin()
        .env("HMM_MEE_THREADS", "4")
        .args(["estimate", "--config", s(&cfg), "--data", s(&data), "--out", s(&four)])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(one.join("estimate.json")).unwrap(), fs::read(four.join("estimate.json")).unwrap());
    assert_eq!(read_json(&four.join("metadata.json"))["threads"], 4);
}

#[test]
fn bad_rows_are_data_errors_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "1\n2\n0\nx7\n3\n").unwrap();
    let out =
        run(&["estimate", "--config", s(&configs().join("example1.json")), "--data", s(&data), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");

    fs::write(&data, "1\n2\n-1\n").unwrap();
    let out =
        run(&["estimate", "--config", s(&configs().join("example1.json")), "--data", s(&data), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn asymptotics_report_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    for (name, factor) in [("example1.json", 6.4415184401122518), ("example2.json", 1.0 + 2.0 / (1.0 - 0.6f64.sqrt()))]
    {
        ok(&["asymptotics", "--config", s(&configs().join(name)), "--out", s(dir.path())]);
        let r = read_json(&dir.path().join("asymptotics.json"));
        assert!(r["inverse_residual"].as_f64().unwrap() < 1e-8);
        assert!(r["bound_gap_min_eigenvalue"].as_f64().unwrap() >= -1e-8);
        assert!((r["certificate"]["variance_factor"].as_f64().unwrap() - factor).abs() < 1e-9, "{name}");
        assert_eq!(r["i2"].as_array().unwrap().len(), 4);
    }
}

#[test]
fn entropy_test_accepts_null_and_rejects_alternative() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("example1.json");
    let null = dir.path().join("null");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&null)]);
    let t0 = dir.path().join("t0");
    ok(&["test", "--config", s(&cfg), "--data", s(&null.join("signals.csv")), "--out", s(&t0)]);
    let r = read_json(&t0.join("test.json"));
    assert_eq!(r["accept"], true);
    assert!(r["type2"]["bound"].as_f64().unwrap() < 0.01);

    let mut alt = read_json(&cfg);
    alt["model"]["betas"] = serde_json::json!([[2.0], [0.5]]);
    let alt_path = dir.path().join("alt.json");
    fs::write(&alt_path, alt.to_string()).unwrap();
    let sim1 = dir.path().join("alt");
    ok(&["simulate", "--config", s(&alt_path), "--out", s(&sim1)]);
    let t1 = dir.path().join("t1");
    ok(&[
        "test",
        "--config",
        s(&cfg),
        "--data",
        s(&sim1.join("signals.csv")),
        "--quantile-method",
        "bound",
        "--out",
        s(&t1),
    ]);
    let r = read_json(&t1.join("test.json"));
    assert_eq!(r["accept"], false);
    assert_eq!(r["method"], "bound");

    let out = run(&["test", "--config", s(&cfg), "--data", s(&null.join("signals.csv")), "--alpha", "0.3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn paper_runs_tabulate_checkpoints_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for example in ["1", "2"] {
        ok(&["paper", "--example", example, "--out", s(&a)]);
    }
    ok(&["paper", "--example", "2", "--out", s(&b)]);
    let r1 = read_json(&a.join("example1/report.json"));
    let ks: Vec<u64> = r1["rows"].as_array().unwrap().iter().map(|r| r["k"].as_u64().unwrap()).collect();
    assert_eq!(ks, [5000, 10000]);
    assert!(r1["rows"][1]["relative_entropy"].as_f64().unwrap() > 0.0);
    let r2 = read_json(&a.join("example2/report.json"));
    let ks: Vec<u64> = r2["rows"].as_array().unwrap().iter().map(|r| r["k"].as_u64().unwrap()).collect();
    assert_eq!(ks, [100, 200]);
    assert_eq!(fs::read(a.join("example2/report.json")).unwrap(), fs::read(b.join("example2/report.json")).unwrap());
    assert_eq!(fs::read_to_string(a.join("example2/table.csv")).unwrap().lines().count(), 3);

    assert_eq!(run(&["paper", "--example", "3"]).status.code(), Some(2));
}
