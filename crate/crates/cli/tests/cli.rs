use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_session-intent");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// One session: "water" (no order) then "bottled water" with an order.
fn write_b2n_events(path: &Path) {
    let lines = [
        r#"{"session_id":"a","seq":1,"ts":1000,"type":"query","query":"water"}"#,
        r#"{"session_id":"a","seq":2,"ts":2000,"type":"query","query":"bottled water"}"#,
        r#"{"session_id":"a","seq":3,"ts":3000,"type":"order","query_seq":2,"item":{"item_id":"i1","title":"Spring Water 24pk","product_type":"Bottled Water"}}"#,
        r#"{"session_id":"b","seq":1,"ts":1000,"type":"query","query":"celsius"}"#,
        r#"{"session_id":"b","seq":2,"ts":2000,"type":"query","query":"celsius drink"}"#,
        r#"{"session_id":"b","seq":3,"ts":3000,"type":"order","query_seq":2,"item":{"item_id":"i2","title":"Celsius Peach","product_type":"Energy Drinks"}}"#,
        r#"not json"#,
    ];
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

struct Trained {
    _dir: tempfile::TempDir,
    sessions: PathBuf,
    dataset: PathBuf,
    model: PathBuf,
}

fn trained() -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let sessions = dir.path().join("sessions.jsonl");
    let dataset = dir.path().join("dataset.jsonl");
    let model = dir.path().join("model.bin");
    ok(&["synth", "--seed", "5", "--sessions", "1500", "--out", p(&sessions)]);
    ok(&["build-dataset", "--sessions", p(&sessions), "--variant", "cur_prev", "--out", p(&dataset)]);
    ok(&["train", "--dataset", p(&dataset), "--out-model", p(&model), "--seed", "5", "--dim", "128"]);
    Trained { _dir: dir, sessions, dataset, model }
}

#[test]
fn ingest_writes_sessions_and_counts_malformed() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.jsonl");
    let out = dir.path().join("sessions.jsonl");
    write_b2n_events(&events);
    let stdout = ok(&["ingest", "--events", p(&events), "--out-sessions", p(&out)]);
    assert_eq!(stdout.trim(), "records 7  malformed 1  sessions 2");
    let text = std::fs::read_to_string(&out).unwrap();
    let first: session_intent::session::Session = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first.id, "a");
    assert_eq!(first.events.len(), 3);
}

#[test]
fn empty_variant_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.jsonl");
    let out = dir.path().join("n2b.jsonl");
    write_b2n_events(&events);
    let result = run(&["build-dataset", "--sessions", p(&events), "--variant", "cur_prev_n2b", "--out", p(&out)]);
    assert!(result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("warning"));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");

    let b2n = dir.path().join("b2n.jsonl");
    let stdout = ok(&["build-dataset", "--sessions", p(&events), "--variant", "cur_prev_b2n", "--out", p(&b2n)]);
    assert!(stdout.contains("examples 2"), "{stdout}");
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let bad_variant = run(&["build-dataset", "--sessions", "x", "--variant", "cur_next", "--out", "y"]);
    assert_eq!(bad_variant.status.code(), Some(2));
    let no_seed = run(&["synth", "--out", "y"]);
    assert_eq!(no_seed.status.code(), Some(2));
    let missing = run(&["build-dataset", "--sessions", "/nonexistent/s.jsonl", "--variant", "cur_only", "--out", "y"]);
    assert_eq!(missing.status.code(), Some(1));
    let stderr = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "{stderr}");
    assert!(stderr.starts_with("error: "));
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    ok(&["synth", "--seed", "9", "--sessions", "300", "--out", p(&a)]);
    ok(&["synth", "--seed", "9", "--sessions", "300", "--out", p(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn predict_reports_gate() {
    let t = trained();
    let gated = ok(&["predict", "--model", p(&t.model), "--prev", "celsius", "--query", "celsius mix in"]);
    let first = gated.lines().next().unwrap();
    let fields: Vec<&str> = first.split('\t').collect();
    assert_eq!(fields.len(), 3, "{first}");
    let prob: f64 = fields[1].parse().unwrap();
    assert!(prob > 0.0 && prob <= 1.0);
    assert_eq!(fields[2], "gated=true");

    let json = ok(&["predict", "--model", p(&t.model), "--prev", "pool shock", "--query", "spaghetti", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["gated"], false);
    assert_eq!(v["input"], "[CUR] spaghetti");
}

#[test]
fn eval_writes_report() {
    let t = trained();
    let report = t.dataset.with_file_name("report.json");
    let stdout = ok(&["eval", "--model", p(&t.model), "--dataset", p(&t.dataset), "--out", p(&report)]);
    assert!(stdout.starts_with("weighted f1 "));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let hist: u64 = v["set_size_histogram"].as_object().unwrap().values().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(hist, v["n_test"].as_u64().unwrap());

    let wrong_dim = run(&["eval", "--model", p(&t.model), "--dataset", p(&t.dataset), "--dim", "64"]);
    assert_eq!(wrong_dim.status.code(), Some(1));
}

#[test]
fn ablate_prints_six_rows() {
    let t = trained();
    let report = t.sessions.with_file_name("ablation.json");
    let stdout =
        ok(&["ablate", "--sessions", p(&t.sessions), "--out-report", p(&report), "--seed", "5", "--dim", "128"]);
    assert_eq!(stdout.lines().count(), 8, "{stdout}");
    assert!(stdout.lines().next().unwrap().contains("f1 on test (weighted)"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn embed_output_is_raw_f64() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("texts.txt");
    let out = dir.path().join("vectors.bin");
    std::fs::write(&input, "[CUR] bottled water\n[PREV] water [CUR] bottled water\n").unwrap();
    ok(&["embed", "--input", p(&input), "--out", p(&out), "--dim", "8"]);
    let bytes = std::fs::read(&out).unwrap();
    assert_eq!(bytes.len(), 2 * 8 * 8);
    let first: Vec<f64> = bytes[..64].chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(first, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
}

#[test]
fn serve_answers_and_snapshots_on_sigterm() {
    let t = trained();
    let snapshot = t.model.with_file_name("snapshot.jsonl");
    let mut child = Command::new(BIN)
        .args(["serve", "--model", p(&t.model), "--bind", "127.0.0.1:0", "--snapshot", p(&snapshot)])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let client = reqwest::blocking::Client::new();

    let health: serde_json::Value = client.get(format!("http://{addr}/v1/healthz")).send().unwrap().json().unwrap();
    assert_eq!(health["ready"], true);
    let event = client
        .post(format!("http://{addr}/v1/sessions/s1/events"))
        .body(r#"{"type":"query","query":"celsius"}"#)
        .send()
        .unwrap();
    assert_eq!(event.status(), 200);
    let intent: serde_json::Value = client
        .post(format!("http://{addr}/v1/sessions/s1/intent"))
        .body(r#"{"query":"celsius mix in"}"#)
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(intent["gated"], true);

    let status = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success());
    let logs = String::from_utf8(output.stderr).unwrap();
    assert!(logs.contains(r#""latency_us""#), "{logs}");
    let snap = std::fs::read_to_string(&snapshot).unwrap();
    assert!(snap.contains(r#""session_id":"s1""#));
}
