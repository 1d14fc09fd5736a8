use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ctr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ctr(args);
    assert!(
        out.status.success(),
        "ctr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn csv_rows(path: &Path) -> usize {
    csv::Reader::from_path(path).unwrap().records().count()
}

/// Small single-system config so that training finishes in seconds.
fn tiny_config(dir: &Path) -> PathBuf {
    let system = repo().join("configs/systems/system2.toml");
    let path = dir.join("tiny.toml");
    std::fs::write(
        &path,
        format!(
            "[env]\nsystems = [{:?}]\n\n[train]\nwarmup_steps = 200\nlog_interval = 500\n\n[train.ddpg]\nhidden = [32, 32]\nbatch_size = 64\n",
            system.display().to_string()
        ),
    )
    .unwrap();
    path
}

fn train_tiny(dir: &Path, out: &str) -> PathBuf {
    let cfg = tiny_config(dir);
    let out_dir = dir.join(out);
    ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--timesteps",
        "1000",
        "--seed",
        "7",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    out_dir
}

#[test]
fn training_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = train_tiny(dir.path(), "a");
    let b = train_tiny(dir.path(), "b");
    for file in ["checkpoint.json", "train_log.csv"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert!(x == y, "{file} differs between identical runs");
    }
    assert!(a.join("manifest.json").exists());
}

#[test]
fn missing_config_is_reported_by_path() {
    let out = ctr(&["train", "--config", "/nonexistent/run.toml", "--out", "/tmp/unused"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/nonexistent/run.toml"), "stderr was: {err}");
}

#[test]
fn evaluate_export_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let run = train_tiny(dir.path(), "run");
    let ck = run.join("checkpoint.json");
    let eval = dir.path().join("eval");
    ok(&[
        "evaluate",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--episodes",
        "10",
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert_eq!(csv_rows(&eval.join("evaluation.csv")), 10);
    assert!(eval.join("summary.json").exists());

    let ws = dir.path().join("ws");
    ok(&[
        "export-workspace",
        "--report",
        eval.join("evaluation.csv").to_str().unwrap(),
        "--out",
        ws.to_str().unwrap(),
    ]);
    assert_eq!(csv_rows(&ws.join("workspace_errors.csv")), 10);
    assert_eq!(csv_rows(&ws.join("rotation_errors.csv")), 30);

    let png = dir.path().join("ws.png");
    ok(&[
        "plot",
        "--csv",
        ws.join("workspace_errors.csv").to_str().unwrap(),
        "--kind",
        "workspace",
        "--output",
        png.to_str().unwrap(),
        "--size",
        "200",
    ]);
    assert!(std::fs::metadata(&png).unwrap().len() > 0);

    // policy tracking on a short line, one row per waypoint
    let path = dir.path().join("line.toml");
    std::fs::write(&path, "shape = \"line\"\nstart = [0.0, 0.0, 120.0]\nend = [5.0, 0.0, 120.0]\nnum_points = 6\n").unwrap();
    let follow = dir.path().join("follow");
    ok(&[
        "follow-path",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--path",
        path.to_str().unwrap(),
        "--out",
        follow.to_str().unwrap(),
    ]);
    assert_eq!(csv_rows(&follow.join("tracking.csv")), 6);
}

#[test]
fn jacobian_helix_writes_one_row_per_waypoint() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("helix.toml");
    std::fs::write(
        &spec,
        "shape = \"helix\"\ncenter = [0.0, 0.0, 130.0]\nradius = 20.0\npitch = 10.0\nturns = 2.0\nnum_points = 100\n",
    )
    .unwrap();
    let out = dir.path().join("jac");
    ok(&[
        "follow-path",
        "--controller",
        "jacobian",
        "--system",
        "0",
        "--path",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(csv_rows(&out.join("tracking.csv")), 100);
}

#[test]
fn trace_is_reproducible_and_shape_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("env.toml");
    std::fs::write(&cfg, "systems = [3]\n").unwrap();
    let a = ok(&["trace", "--config", cfg.to_str().unwrap(), "--steps", "30", "--seed", "4"]);
    let b = ok(&["trace", "--config", cfg.to_str().unwrap(), "--steps", "30", "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 32);

    let shape = ok(&["shape", "--system", "0", "--q", "-50,-30,-10,0,90,180"]);
    assert!(String::from_utf8_lossy(&shape.stdout).lines().count() > 2);
}

#[test]
fn malformed_joints_are_rejected() {
    let out = ctr(&["shape", "--system", "0", "--q", "1,2,3"]);
    assert!(!out.status.success());
}
