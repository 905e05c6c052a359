use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dkg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dkg"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("dkg runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_bundled_corpus() {
    let o = dkg(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok: 25 grids, 55 instructions"));
}

#[test]
fn validate_reports_a_broken_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let o = dkg(&["validate", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(dkg(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(dkg(&["classify", "no-such-grid", "Get the red key."]).status.code(), Some(2));
    assert_eq!(dkg(&["run", "--parallelism", "0"]).status.code(), Some(2));
}

#[test]
fn classify_prints_label_and_response() {
    let o = dkg(&["classify", "appendix-1", "Can you get the green key?"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("Label: Quality Violation\n"));
    assert_eq!(out.lines().filter(|l| l.starts_with("Option: ")).count(), 3);

    let o = dkg(&["classify", "appendix-1", "Pick up the red key.", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["label"], "quantity_violation");
    assert_eq!(v["inferred_gem"], serde_json::json!([7, 0]));
}

#[test]
fn classify_accepts_a_grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("tiny.txt");
    fs::write(&file, "m.r\nWhR\nWWg\n").unwrap();
    let o = dkg(&["classify", path(&file), "Get the red key."]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Plan ("));
}

#[test]
fn prompt_conditions_differ_in_norm_text() {
    let with = stdout(&dkg(&["prompt", "appendix-1", "Can you dance?"]));
    let without = stdout(&dkg(&["prompt", "appendix-1", "Can you dance?", "--condition", "without_norms"]));
    assert!(with.contains("Norm:"));
    assert!(!without.contains("Norm:"));
    assert!(with.contains("[['r' '.' '.' '.' 'm' 'W' 'W' 'g']"));
}

#[test]
fn run_report_and_script_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("oracle");
    let o = dkg(&["run", "--output-dir", path(&out), "--parallelism", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(stdout(&o), report);
    assert!(fs::read_to_string(out.join("summary.csv")).unwrap().starts_with("experiment,"));

    let again = dkg(&["report", path(&out.join("records.jsonl"))]);
    assert_eq!(stdout(&again), report);

    let script = dir.path().join("script.jsonl");
    let o = dkg(&["script", path(&out.join("records.jsonl")), path(&script)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("wrote 110 replies"));

    let mut replays = Vec::new();
    for name in ["replay-a", "replay-b"] {
        let dest = dir.path().join(name);
        let o = dkg(&["run", "--backend", "scripted", "--script", path(&script), "--output-dir", path(&dest)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stderr(&o).is_empty());
        replays.push(fs::read(dest.join("records.jsonl")).unwrap());
        replays.push(fs::read(dest.join("report.txt")).unwrap());
    }
    assert_eq!(replays[0], replays[2]);
    assert_eq!(replays[1], replays[3]);
}

#[test]
fn config_file_is_merged_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let out = dir.path().join("out");
    fs::write(
        &config,
        format!("conditions = [\"with_norms\"]\nparallelism = 2\noutput_dir = {:?}\n", path(&out)),
    )
    .unwrap();
    let o = dkg(&["run", "--config", path(&config), "--max-tokens", "256"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("records.jsonl")).unwrap().lines().count(), 55);
}

#[test]
fn credentials_never_come_from_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "backend = \"remote\"\napi_key = \"sk-not-allowed\"\n").unwrap();
    let o = dkg(&["run", "--config", path(&config)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("api_key"));
}

#[test]
fn remote_backend_without_key_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = dkg(&["run", "--backend", "remote", "--output-dir", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("OPENAI_API_KEY"));
    assert!(!dir.path().join("records.jsonl").exists());
}
