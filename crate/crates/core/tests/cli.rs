use std::path::Path;
use std::process::{Command, Output};

use heteroreg::domain::{hetero_classification_spec, GroupPartition};
use heteroreg::{regprofile, theory};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_heteroreg"));
    c.env_remove("HETEROREG_SEED");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn generate_writes_rows_and_sidecar() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["generate", "--spec", "figure3", "--n", "123", "--seed", "4", "--out", "data/d.csv"]);
    let csv = read(d.path().join("data/d.csv"));
    assert!(csv.starts_with("x,y\n"));
    assert_eq!(csv.lines().count(), 124);
    let side: serde_json::Value = serde_json::from_str(&read(d.path().join("data/d.json"))).unwrap();
    assert_eq!(side["n"], 123);
    assert_eq!(side["seed"], 4);
    // the sidecar's spec reproduces the data
    std::fs::write(d.path().join("spec.json"), side["spec"].to_string()).unwrap();
    ok(d.path(), &["generate", "--spec", "spec.json", "--n", "123", "--seed", "4", "--out", "again.csv"]);
    assert_eq!(read(d.path().join("again.csv")), csv);
}

#[test]
fn seed_falls_back_to_environment() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["generate", "--n", "50", "--seed", "17", "--out", "a.csv"]);
    let out = bin().current_dir(d.path()).env("HETEROREG_SEED", "17").args(["generate", "--n", "50", "--out", "b.csv"]).output().unwrap();
    assert!(out.status.success());
    assert_eq!(read(d.path().join("a.csv")), read(d.path().join("b.csv")));
    let out = bin().current_dir(d.path()).env("HETEROREG_SEED", "x").args(["generate", "--n", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_is_byte_identical_on_rerun() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["generate", "--spec", "hetero-classification", "--n", "300", "--seed", "1", "--out", "d.csv"]);
    let args = |out: &'static str| {
        vec!["fit", "--data", "d.csv", "--spec", "hetero-classification", "--profile", "optimal", "--lambda", "0.05", "--penalty", "per-example", "--out", out]
    };
    ok(d.path(), &args("f1.csv"));
    ok(d.path(), &args("f2.csv"));
    assert_eq!(read(d.path().join("f1.csv")), read(d.path().join("f2.csv")));
    let out = ok(d.path(), &["eval", "--fit", "f1.csv", "--spec", "hetero-classification"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["mse"].as_f64().unwrap() > 0.0);
    assert_eq!(v["groups"].as_array().unwrap().len(), 2);
}

#[test]
fn har_and_compare_are_byte_identical_on_rerun() {
    let d = tempfile::tempdir().unwrap();
    for dir in ["h1", "h2"] {
        ok(d.path(), &["har", "--spec", "hetero-classification", "--n", "400", "--seed", "2", "--grid", "65", "--out-dir", dir]);
    }
    for f in ["har.json", "tau.csv", "fit.csv"] {
        assert_eq!(read(d.path().join("h1").join(f)), read(d.path().join("h2").join(f)), "{f}");
    }
    for dir in ["c1", "c2"] {
        ok(d.path(), &["compare", "--n", "200", "--reps", "4", "--seed", "3", "--grid", "65", "--out-dir", dir]);
    }
    for f in ["compare.csv", "compare_z.csv", "compare.json"] {
        assert_eq!(read(d.path().join("c1").join(f)), read(d.path().join("c2").join(f)), "{f}");
    }
}

#[test]
fn solver_failure_exits_with_three() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["generate", "--spec", "hetero-classification", "--n", "200", "--seed", "3", "--out", "d.csv"]);
    let out = run(d.path(), &["fit", "--data", "d.csv", "--task", "classification", "--lambda", "0.01", "--max-iters", "1", "--out", "f.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.json"), r#"{"bogus": 1}"#).unwrap();
    let out = run(d.path(), &["--config", "bad.json", "generate", "--n", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert_eq!(run(d.path(), &["fit", "--lambda", "0.1"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(d.path(), &["theory", "--partition", "0,0.7,0.5,1"]).status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("c.json"), r#"{"n": 30, "seed": 5, "out": "cfg.csv"}"#).unwrap();
    ok(d.path(), &["--config", "c.json", "generate"]);
    assert_eq!(read(d.path().join("cfg.csv")).lines().count(), 31);
    ok(d.path(), &["--config", "c.json", "generate", "--n", "12", "--out", "flag.csv"]);
    let flagged = read(d.path().join("flag.csv"));
    assert_eq!(flagged.lines().count(), 13);
    ok(d.path(), &["generate", "--n", "12", "--seed", "5", "--out", "plain.csv"]);
    assert_eq!(flagged, read(d.path().join("plain.csv")));
}

#[test]
fn theory_matches_library() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["theory", "--c0", "1.5", "--n", "2000", "--out", "t.csv", "--json", "t.json"]);
    let spec = hetero_classification_spec();
    let part = GroupPartition::uniform(2).unwrap();
    let lambda = theory::lambda_from_c0(1.5, 2000);
    let expect = theory::asymptotic_mse(&spec, &regprofile::optimal_rho(&spec, &part), lambda).unwrap();
    let table = read(d.path().join("t.csv"));
    let mut rows = table.lines();
    assert_eq!(rows.next().unwrap(), "group_lo,group_hi,rho,curvature,spread,bias,variance,total");
    for (row, g) in rows.zip(&expect.groups) {
        let total: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(total, g.total());
    }
    let v: serde_json::Value = serde_json::from_str(&read(d.path().join("t.json"))).unwrap();
    assert_eq!(v["lambda"].as_f64().unwrap(), lambda);
    assert_eq!(v["c0"].as_f64().unwrap(), 1.5);
    assert_eq!(v["report"]["total"].as_f64().unwrap(), expect.total);
    assert_eq!(run(d.path(), &["theory", "--c0", "1"]).status.code(), Some(2));
}

#[test]
fn workers_do_not_change_results() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["--workers", "1", "compare", "--n", "150", "--reps", "3", "--grid", "33", "--out-dir", "w1"]);
    ok(d.path(), &["--workers", "3", "compare", "--n", "150", "--reps", "3", "--grid", "33", "--out-dir", "w3"]);
    assert_eq!(read(d.path().join("w1/compare.csv")), read(d.path().join("w3/compare.csv")));
}
