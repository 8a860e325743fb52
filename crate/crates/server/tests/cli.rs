use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use casegraph_core::config::EngineConfig;
use casegraph_core::engine::Engine;
use casegraph_core::fixtures::cascade_request;
use casegraph_core::schema::{Actor, TypePath};
use casegraph_core::store::NodeCandidate;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_casegraph");

/// Runs the binary, killing it if it outlives `limit`.
fn run(args: &[&str], limit: Duration) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary starts");
    let start = Instant::now();
    loop {
        if child.try_wait().unwrap().is_some() {
            return child.wait_with_output().unwrap();
        }
        if start.elapsed() > limit {
            child.kill().unwrap();
            let out = child.wait_with_output().unwrap();
            panic!(
                "{args:?} still running after {limit:?}; stderr: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn populated_case(dir: &Path) {
    let config = EngineConfig {
        data_dir: Some(dir.to_path_buf()),
        ..EngineConfig::default()
    };
    let mut engine = Engine::open(config).unwrap();
    engine.ingest(cascade_request(), &Actor::user("ana")).unwrap();
    engine
        .store_mut()
        .upsert_node(
            NodeCandidate::new(TypePath::parse("Thing/Entity/Person").unwrap(), "Zora"),
            &Actor::user("ana"),
        )
        .unwrap();
}

fn flip_in_line(log: &Path, seq: usize) {
    let mut bytes = std::fs::read(log).unwrap();
    let starts: Vec<usize> = std::iter::once(0)
        .chain(bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').map(|(i, _)| i + 1))
        .collect();
    // Line 0 is the header.
    let line = starts[seq + 1];
    let target = line + 20;
    assert_ne!(bytes[target], b'\n');
    bytes[target] ^= 0x01;
    std::fs::write(log, bytes).unwrap();
}

#[test]
fn serve_refuses_a_tampered_log() {
    let dir = tempfile::tempdir().unwrap();
    populated_case(dir.path());
    let log = dir.path().join("provenance.ndjson");
    let data_dir = dir.path().to_str().unwrap();

    let out = run(&["verify", "--log", log.to_str().unwrap()], Duration::from_secs(30));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    flip_in_line(&log, 7);
    let out = run(&["serve", "--data-dir", data_dir, "--port", "0"], Duration::from_secs(30));
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("seq 7"), "{stderr}");

    let out = run(&["verify", "--log", log.to_str().unwrap()], Duration::from_secs(30));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seq 7"));
}

#[test]
fn serve_reports_a_busy_port() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port().to_string();
    let out = run(&["serve", "--port", &port], Duration::from_secs(30));
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot listen"));
}

#[test]
fn ingest_replay_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().to_str().unwrap();
    let note = dir.path().join("note.txt");
    std::fs::write(&note, "Anna met Bob in Berlin on 12.03.2022.").unwrap();

    let out = run(&["ingest", "--data-dir", data_dir, note.to_str().unwrap()], Duration::from_secs(60));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let job: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(job["status"], "done");
    let document = job["document"].as_u64().unwrap();

    let out = run(&["replay", "--data-dir", data_dir], Duration::from_secs(60));
    assert!(out.status.success());
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["nodes"].as_u64().unwrap() >= 4, "{summary}");

    let out = run(&["search", "--data-dir", data_dir, "--modes", "exact", "berlin"], Duration::from_secs(60));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let hits: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(hits[0]["mode"], "exact");

    let report = dir.path().join("report.html");
    let out = run(
        &[
            "export-report",
            "--data-dir",
            data_dir,
            "--items",
            &document.to_string(),
            "--format",
            "html",
            "--out",
            report.to_str().unwrap(),
        ],
        Duration::from_secs(60),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&report).unwrap().contains("note.txt"));

    let out = run(&["layout", "--data-dir", data_dir, "--iterations", "10"], Duration::from_secs(60));
    assert!(out.status.success());
    let positions: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(positions.as_array().unwrap().len() as u64, summary["nodes"].as_u64().unwrap() - summary["hidden_nodes"].as_u64().unwrap());
}

#[test]
fn eval_ner_over_a_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let gold = dir.path().join("gold.ndjson");
    std::fs::write(
        &corpus,
        "{\"doc\":\"d1\",\"text\":\"Anna met Bob in Berlin.\"}\n{\"doc\":\"d2\",\"text\":\"Zora called Europol.\"}\n",
    )
    .unwrap();
    std::fs::write(
        &gold,
        [
            r#"{"doc":"d1","start":0,"end":4,"label":"PERSON"}"#,
            r#"{"doc":"d1","start":9,"end":12,"label":"PERSON"}"#,
            r#"{"doc":"d1","start":16,"end":22,"label":"LOCATION"}"#,
            r#"{"doc":"d2","start":0,"end":4,"label":"PERSON"}"#,
            r#"{"doc":"d2","start":12,"end":19,"label":"ORGANIZATION"}"#,
        ]
        .join("\n"),
    )
    .unwrap();
    let out = run(
        &["eval-ner", "--gold", gold.to_str().unwrap(), "--corpus", corpus.to_str().unwrap()],
        Duration::from_secs(30),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    // 4 of 5 gold spans found, no false positives.
    assert_eq!(report["micro"]["tp"], 4);
    assert_eq!(report["micro"]["fp"], 0);
    assert_eq!(report["micro"]["fn"], 1);
    assert_eq!(report["micro"]["precision"], 1.0);
    assert_eq!(report["micro"]["recall"], 0.8);

    let bad = dir.path().join("bad.ndjson");
    std::fs::write(&bad, r#"{"doc":"d1","start":0,"end":400,"label":"PERSON"}"#).unwrap();
    let out = run(
        &["eval-ner", "--gold", bad.to_str().unwrap(), "--corpus", corpus.to_str().unwrap()],
        Duration::from_secs(30),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}
