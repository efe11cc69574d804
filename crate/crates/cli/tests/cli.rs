use std::path::Path;
use std::process::{Command, Output};

fn penreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_penreg")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const LASSO: &str = r#"{"penalty": "l1", "n": 40, "p": 10, "sparsity": 2, "trials": 12, "seed": 3}"#;

#[test]
fn coverage_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", LASSO);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = penreg(&["coverage", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("trial,converged,"));
    assert!(text.contains("\r\n"));
    assert_eq!(text.lines().count(), 13);

    let j1 = dir.path().join("a.json");
    let o = penreg(&["coverage", "--config", &cfg, "--out", j1.to_str().unwrap(), "--format", "json", "--seed", "9"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&j1).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 9);
    assert!(v["aggregates"]["pred-violation-rate"].is_number());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // usage: unknown flag, missing config
    assert_eq!(penreg(&["coverage", "--bogus"]).status.code(), Some(1));
    assert_eq!(penreg(&["coverage"]).status.code(), Some(1));
    assert_eq!(penreg(&["width", "--override-constant", "nonsense"]).status.code(), Some(1));
    // invalid config
    let bad = write(dir.path(), "bad.json", r#"{"penalty": "l1", "n": 40, "p": 10, "sparsity": 2, "delta": 2.0}"#);
    assert_eq!(penreg(&["coverage", "--config", &bad]).status.code(), Some(2));
    let garbled = write(dir.path(), "g.json", "{not json");
    assert_eq!(penreg(&["certify", "--config", &garbled]).status.code(), Some(2));
    let group_rd = write(
        dir.path(),
        "grd.json",
        r#"{"penalty": "group", "n": 60, "groups": 5, "group-size": 3, "sparsity": 1, "lambda-rule": {"random-design": 30}}"#,
    );
    assert_eq!(penreg(&["coverage", "--config", &group_rd]).status.code(), Some(2));
    // numerical: unwritable output path
    let cfg = write(dir.path(), "c.json", LASSO);
    let o = penreg(&["coverage", "--config", &cfg, "--out", dir.path().join("no/such/dir.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(penreg(&["--help"]).status.code(), Some(0));
}

#[test]
fn solve_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let design = write(dir.path(), "x.csv", "1,0\r\n0,1\r\n1,1\r\n");
    write(dir.path(), "x.json", r#"{"shape": "vector", "p": 2, "n": 3}"#);
    let y = write(dir.path(), "y.csv", "1\r\n2\r\n3\r\n");
    let o = penreg(&["solve", "--design", &design, "--response", &y, "--lambda", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let b: Vec<f64> = v["beta-hat"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((b[0] - 1.0).abs() < 1e-6 && (b[1] - 2.0).abs() < 1e-6, "{b:?}");

    let out = dir.path().join("beta.csv");
    let o = penreg(&["solve", "--design", &design, "--response", &y, "--lambda", "0.1", "--out", out.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 2);
}

#[test]
fn other_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", LASSO);
    for args in [
        vec!["tune", "--config", cfg.as_str()],
        vec!["compat", "--config", cfg.as_str(), "--support", "0,3", "--samples", "500"],
        vec!["smallball", "--dim", "4", "--samples", "2000", "--override-constant", "C=2"],
        vec!["width", "--set", "penalty-ball", "--penalty", "nuclear", "--k", "3", "--m", "3", "--trials", "200"],
        vec!["event-prob", "--config", cfg.as_str(), "--format", "json"],
        vec!["certify", "--config", cfg.as_str()],
        vec!["solve", "--config", cfg.as_str()],
    ] {
        let o = penreg(&args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stdout.is_empty(), "{args:?}");
    }
    let o = penreg(&["smallball", "--dim", "4", "--samples", "2000", "--override-constant", "C=2"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["constant"], 2.0);
}
