use std::path::{Path, PathBuf};
use std::process::Command;

use mentorcore_harness::{read_csv, Summary};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mentorcore"))
        .args(args)
        .current_dir(dir)
        .env("MENTORCORE_THREADS", "1")
        .output()
        .unwrap()
}

#[test]
fn sweep_writes_csv_summary_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hh.csv");
    let config = configs().join("heaven_hell.toml");
    let args =
        ["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--trials", "20", "--emit-plots"];
    let first = run(&args, dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.trials == 20 && r.wall_ms == 0));
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("hh.summary.json")).unwrap()).unwrap();
    assert!(summary.all_pass);
    assert!(dir.path().join("hh_queries.svg").exists());

    let second = run(&args, dir.path());
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), text);
}

#[test]
fn failed_ceiling_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("always_wrong.toml");
    std::fs::write(
        &config,
        r#"
schema_version = 1
T_list = [16, 32, 64]
trials = 5
seed = 1
metrics = ["SA"]

[environment]
name = "smooth_thresholds"
theta = 0.5

[[stack]]
layer = "fixed_action"
action = 0

[ceilings]
SA = 0.5
"#,
    )
    .unwrap();
    let out = run(&["--config", config.to_str().unwrap(), "--out", "r.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(
        &config,
        r#"
schema_version = 1
T_list = [64, 32]
trials = 5
seed = 1
metrics = ["SA"]

[environment]
name = "smooth_thresholds"
theta = 0.5

[[stack]]
layer = "mentor_copy"
"#,
    )
    .unwrap();
    let out = run(&["--config", config.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("T_list"));
}
