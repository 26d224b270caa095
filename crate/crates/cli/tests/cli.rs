use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecoedgetwin_cli::{sha256_hex, RunManifest, SWEEP_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecoedgetwin"))
}

fn desk() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json")
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tdrive_100.csv")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().map(String::from).collect()
}

#[test]
fn generate_writes_a_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let c = dir.path().join("c.json");
    assert!(run(&["generate", "--config", s(&desk()), "--out", s(&a)]).status.success());
    assert!(run(&["generate", "--config", s(&desk()), "--out", s(&b)]).status.success());
    assert!(run(&["generate", "--config", s(&desk()), "--out", s(&c), "--seed", "7"]).status.success());
    let va: serde_json::Value = serde_json::from_slice(&std::fs::read(&a).unwrap()).unwrap();
    assert_eq!(va["users"].as_array().unwrap().len(), 10);
    assert!(!va["servers"].as_array().unwrap().is_empty());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn train_writes_metrics_checkpoints_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&["train", "--config", s(&desk()), "--episodes", "3", "--seed", "1", "--step-log", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("episodes 3"));
    let rows = lines(&out.join("train.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("episode,"));
    assert_eq!(lines(&out.join("steps.csv")).len(), 1 + 3 * 50);
    for f in ["actor.json", "critic.json"] {
        assert!(out.join(f).exists());
    }
    let m: RunManifest = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.seed, 1);
    assert_eq!(m.config_sha256, sha256_hex(&std::fs::read(desk()).unwrap()));
    assert!(!m.finished_at.is_empty());
}

#[test]
fn train_replays_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&[
        "train", "--config", s(&desk()), "--episodes", "2", "--trajectories", s(&fixture()), "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&out.join("train.csv")).len(), 3);
}

#[test]
fn benchmark_arm_trains_too() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = run(&["train", "--config", s(&desk()), "--episodes", "2", "--benchmark", "--out", s(&out)]);
    assert!(o.status.success());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["train", "--config", s(&missing), "--out", s(&out)]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"user_count": 10, "bogus": 1}"#).unwrap();
    assert_eq!(run(&["generate", "--config", s(&bad), "--out", s(&out)]).status.code(), Some(2));

    let neg = dir.path().join("neg.json");
    std::fs::write(&neg, r#"{"area_side_km": -1.0}"#).unwrap();
    assert_eq!(run(&["generate", "--config", s(&neg), "--out", s(&out)]).status.code(), Some(2));

    let tc = dir.path().join("tc.json");
    std::fs::write(&tc, r#"{"actor_rate": 0.01, "learning_rate": 1}"#).unwrap();
    let o = run(&["train", "--config", s(&desk()), "--train-config", s(&tc), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let no_traj = dir.path().join("none.csv");
    let o = run(&["train", "--config", s(&desk()), "--episodes", "1", "--trajectories", s(&no_traj), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));

    let junk = dir.path().join("junk.csv");
    std::fs::write(&junk, "a,b,c\n1,2\n").unwrap();
    let o = run(&["train", "--config", s(&desk()), "--episodes", "1", "--trajectories", s(&junk), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn compare_writes_paired_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp");
    let o = run(&["compare", "--config", s(&desk()), "--episodes", "3", "--seeds", "0,1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out.join("compare.csv"));
    assert_eq!(rows.len(), 1 + 2 * 3);
    assert!(rows[0].starts_with("seed,episode,eco_"));
    let summary = lines(&out.join("compare_summary.csv"));
    assert_eq!(summary.len(), 2);
    assert!(summary[1].split(',').all(|v| v.parse::<f64>().is_ok_and(f64::is_finite)));
}

#[test]
fn sweep_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    assert!(run(&["train", "--config", s(&desk()), "--episodes", "2", "--out", s(&run_dir)]).status.success());
    let out = dir.path().join("sweep");
    let o = run(&[
        "speed-sweep",
        "--config",
        s(&desk()),
        "--actor",
        s(&run_dir.join("actor.json")),
        "--critic",
        s(&run_dir.join("critic.json")),
        "--episodes",
        "3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out.join("sweep.csv"));
    assert_eq!(rows[0], SWEEP_HEADER.join(","));
    assert_eq!(rows.len(), 5);
    let speeds: Vec<f64> = rows[1..].iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(speeds, vec![0.0, 20.0, 40.0, 60.0]);
}

#[test]
fn sweep_rejects_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("actor.json");
    std::fs::write(&bogus, "{\"format\": \"something-else\"}").unwrap();
    let o = run(&["speed-sweep", "--config", s(&desk()), "--actor", s(&bogus), "--out", s(&dir.path().join("o"))]);
    assert!(!o.status.success());
}
