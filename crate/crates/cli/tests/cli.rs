use std::path::Path;
use std::process::{Command, Output};

fn omqkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omqkit")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn generate(dir: &Path) {
    let o = omqkit(&["generate", "--out", dir.to_str().unwrap(), "--seed", "4", "--bases", "miniroom,office"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("manifest.json").exists());
}

#[test]
fn generate_run_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    generate(&suite);
    let out = dir.path().join("out");
    let o = omqkit(&[
        "run", "--suite", suite.to_str().unwrap(), "--agent", "oracle", "--selection", "dev",
        "--tasks", "semantic_slam", "--difficulties", "passive_gt,active_dr", "--parallelism", "2",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    assert_eq!(table.lines().filter(|l| l.ends_with("completed")).count(), 10);
    assert_eq!(std::fs::read_to_string(out.join("report.txt")).unwrap(), table);

    let r = omqkit(&["report", out.join("report.json").to_str().unwrap()]);
    assert!(r.status.success());
    assert_eq!(stdout(&r), table);
    let j = omqkit(&["report", "--json", out.join("report.json").to_str().unwrap()]);
    assert_eq!(stdout(&j), std::fs::read_to_string(out.join("report.json")).unwrap());
}

#[test]
fn failed_cells_give_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let o = omqkit(&[
        "run", "--suite", dir.path().to_str().unwrap(), "--agent", "exit 1", "--selection", "test",
        "--tasks", "semantic_slam", "--difficulties", "passive_gt",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("failed: agent exited"));
}

#[test]
fn null_agent_zero_scores_still_succeed() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let o = omqkit(&["run", "--suite", dir.path().to_str().unwrap(), "--agent", "null", "--selection", "test"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().filter(|l| l.ends_with("completed")).all(|l| l.contains(" 0.000000 ")));
}

#[test]
fn score_ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let gt = dir.path().join("gt/miniroom_2.json");
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(&gt).unwrap()).unwrap();
    let objects: Vec<serde_json::Value> = doc["objects"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| serde_json::json!({ "cuboid": o["cuboid"], "label_probs": { o["true_label"].as_str().unwrap(): 1.0 } }))
        .collect();
    let map = serde_json::json!({ "version": 1, "task": "semantic_slam", "environment": "miniroom_2", "objects": objects });
    let map_path = dir.path().join("map.json");
    std::fs::write(&map_path, serde_json::to_vec(&map).unwrap()).unwrap();
    let o = omqkit(&["score", "--map", map_path.to_str().unwrap(), "--gt", gt.to_str().unwrap(), "--task", "semantic_slam"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("\"omq\": 1.000000"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let o = omqkit(&["report", "/nonexistent/report.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let o = omqkit(&["run", "--suite", dir.path().to_str().unwrap(), "--agent", "null", "--bases", "house"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn serve_answers_framed_requests() {
    use std::io::{BufRead, BufReader};

    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_omqkit"))
        .args(["serve", "--suite", dir.path().to_str().unwrap(), "--addr", "127.0.0.1:0", "--strict"])
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let mut client = omqkit::agent_api::Client::connect(addr).unwrap();
    let envs = client.call(omqkit::agent_api::Endpoint::ListEnvironments, serde_json::json!({})).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(envs["strict"], serde_json::json!(true));
    assert_eq!(envs["environments"].as_array().unwrap().len(), 10);
}
