use std::fs;
use std::process::{Command, Output};

fn barrelnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_barrelnet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_lists_paper() {
    let o = barrelnet(&["presets"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l.starts_with("paper")));
}

#[test]
fn select_prints_assignment_csv() {
    let o = barrelnet(&["select", "--preset", "paper"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("node_id,is_relay,chosen_relay,final_score"));
    assert_eq!(lines.count(), 31);
    let relays = out.lines().skip(1).filter(|l| l.split(',').nth(1) == Some("1")).count();
    assert_eq!(relays, 15);
}

#[test]
fn validate_reports_connected_plan() {
    let o = barrelnet(&["validate", "--preset", "paper"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for line in stdout(&o).lines().skip(1) {
        assert!(line.contains("isolated   0"), "{line}");
    }
}

#[test]
fn run_writes_outputs_and_honors_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = barrelnet(&["run", "--preset", "smoke", "--seed", "40", "--workers", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.csv").is_file());
    assert!(out.join("runs/crns_1_40.csv").is_file());
    assert!(out.join("runs/crns_1_41.csv").is_file());
    assert!(!out.join("runs/crns_1_40.events.csv").exists());
}

#[test]
fn emit_events_writes_logs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = barrelnet(&["run", "--preset", "smoke", "--emit-events", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let log = fs::read_to_string(out.join("runs/all_1_1.events.csv")).unwrap();
    assert!(log.starts_with("time_us,node,event_kind,source,seq,channel\n"));
    assert!(log.lines().count() > 10);
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plan.toml");
    fs::write(&cfg, "[plan]\nalgorithms = []\n").unwrap();
    let o = barrelnet(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("plan.algorithms"));

    fs::write(&cfg, "[channel]\nframe_us = 3\n").unwrap();
    let o = barrelnet(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("frame_us"));
}

#[test]
fn failed_cells_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plan.toml");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "preset = \"smoke\"\n[plan]\nalgorithms = [\"all\", \"random\"]\nrandom_count = 99\noutput_dir = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = barrelnet(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("errors.csv").is_file());
}
