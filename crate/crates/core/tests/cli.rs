use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_invariant-flow"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn run(name: &str, dir: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg("--scenario")
        .arg(scenario(name))
        .arg("--out")
        .arg(dir)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn run_invariant_scenario_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("logistic-neumann.json", dir.path(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "diagnostics.csv", "verdict.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["status"], "invariant");
}

#[test]
fn run_exit_scenario_exits_four_with_positive_hopf() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("dirichlet-exit.json", dir.path(), &["--cadence", "64"]);
    assert_eq!(code(&out), 4);
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["status"], "exited");
    assert_eq!(verdict["hopf_positive"], true);
    let diag = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("t,s,x_argmax,on_boundary,hopf_value\n"));
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let missing = bin()
        .args(["run", "--scenario", "/nonexistent/file.json"])
        .output()
        .unwrap();
    assert_eq!(code(&missing), 2);
}

#[test]
fn check_tangency_exit_codes() {
    let ok = bin()
        .args(["check-tangency", "--scenario"])
        .arg(scenario("tangency-inward.json"))
        .output()
        .unwrap();
    assert_eq!(code(&ok), 0);
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["certified"], true);

    let refuted = bin()
        .args(["check-tangency", "--scenario"])
        .arg(scenario("tangency-outward.json"))
        .output()
        .unwrap();
    assert_eq!(code(&refuted), 3);
    let report: serde_json::Value = serde_json::from_slice(&refuted.stdout).unwrap();
    assert!(report["worst_witness"].is_object());

    let dir = tempfile::tempdir().unwrap();
    let no_set = dir.path().join("no_set.json");
    let text = std::fs::read_to_string(scenario("tangency-inward.json")).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value.as_object_mut().unwrap().remove("set");
    std::fs::write(&no_set, value.to_string()).unwrap();
    let missing = bin().args(["check-tangency", "--scenario"]).arg(&no_set).output().unwrap();
    assert_eq!(code(&missing), 2);
}

#[test]
fn demos_and_unknown_demo() {
    let out = bin().args(["demo", "dini-lemma"]).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("t_C"));
    let out = bin().args(["demo", "no-such-demo"]).output().unwrap();
    assert_eq!(code(&out), 2);
    let out = bin().args(["demo", "fhn-rectangle"]).output().unwrap();
    assert_eq!(code(&out), 0);
    let out = bin().args(["demo", "bundle-rotation"]).output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("gauge check"));
}

#[test]
fn identical_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run("dirichlet-exit.json", a.path(), &["--seed", "7"]);
    let out = bin()
        .env("INVARIANT_FLOW_THREADS", "1")
        .arg("run")
        .arg("--scenario")
        .arg(scenario("dirichlet-exit.json"))
        .arg("--out")
        .arg(b.path())
        .args(["--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
    let read = |d: &Path| std::fs::read(d.join("verdict.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));

    let tangency = |threads: &str| {
        bin()
            .env("INVARIANT_FLOW_THREADS", threads)
            .args(["check-tangency", "--seed", "11", "--scenario"])
            .arg(scenario("fhn-rectangle.json"))
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(tangency("1"), tangency("4"));
}

#[test]
fn mode_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("bundle-rotation.json", dir.path(), &["--mode", "flat"]);
    assert_eq!(code(&out), 2);
    let out = run("tangency-inward.json", dir.path(), &["--mode", "bundle"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x1,f1,f2\n"));
}
