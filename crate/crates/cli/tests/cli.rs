use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evidence_testkit::stub::{StubReply, StubServer};
use evidence_testkit::{fixture_path, read_fixture};
use serde_json::{json, Value};

fn evidence(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evidence"))
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn normalized(dir: &Path) -> PathBuf {
    let doc = dir.join("doc.json");
    let out = evidence(&["normalize", p(&fixture_path("password_policy.html")), "-o", p(&doc)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    doc
}

fn extract_lines(doc: &Path, pipeline: &str) -> Vec<Value> {
    let vectors = fixture_path("vectors.txt");
    let out = evidence(&[
        "extract",
        p(doc),
        p(&fixture_path("catalog.json")),
        "--pipeline",
        pipeline,
        "--vectors",
        p(&vectors),
    ]);
    stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn write_jsonl(path: &Path, records: &[Value]) {
    let text: String = records.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn normalize_to_stdout_matches_file_output() {
    let dir = tempfile::tempdir().unwrap();
    let doc = normalized(dir.path());
    let printed = stdout(&evidence(&["normalize", p(&fixture_path("password_policy.html"))]));
    assert_eq!(printed, std::fs::read_to_string(&doc).unwrap());
    let v: Value = serde_json::from_str(&printed).unwrap();
    assert!(v["doc_id"].as_str().unwrap().starts_with("doc-"));
}

#[test]
fn extract_finds_the_password_age() {
    let dir = tempfile::tempdir().unwrap();
    let doc = normalized(dir.path());
    let lines = extract_lines(&doc, "keyword");
    assert_eq!(lines.len(), 1);
    let r = &lines[0];
    assert!(r["answer"]["text"].as_str().unwrap().contains("60 days"));
    assert_eq!(r["assessment"]["rendered"], "60 ≤ 100 → True");
    assert_eq!(r["assessment"]["outcome"], "Compliant");
    assert_eq!(r["status"], "Pending");
    assert_eq!(r["created_at"], "2023-11-14T22:13:20Z");
    assert_eq!(r["duration_ms"], 0);
}

#[test]
fn extract_all_is_ordered_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let doc = normalized(dir.path());
    let (catalog, vectors) = (fixture_path("catalog.json"), fixture_path("vectors.txt"));
    let args = [
        "extract",
        p(&doc),
        p(&catalog),
        "--pipeline",
        "all",
        "--vectors",
        p(&vectors),
    ];
    let first = stdout(&evidence(&args));
    assert_eq!(first, stdout(&evidence(&args)));
    let pipelines: Vec<String> = first
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["pipeline"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(
        pipelines,
        ["whole_doc", "keyword", "score", "similarity", "similarity_score"]
    );
}

#[test]
fn exit_codes_separate_validation_from_backend_errors() {
    let dir = tempfile::tempdir().unwrap();
    let doc = normalized(dir.path());
    let catalog = fixture_path("catalog.json");

    let missing = evidence(&["extract", "nope.json", p(&catalog), "--pipeline", "keyword"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(!missing.stderr.is_empty());

    let no_vectors = evidence(&["extract", p(&doc), p(&catalog), "--pipeline", "similarity"]);
    assert_eq!(no_vectors.status.code(), Some(1));

    let bad_flag = evidence(&["extract", p(&doc), p(&catalog), "--pipeline", "fastest"]);
    assert_eq!(bad_flag.status.code(), Some(1));

    let no_endpoint = evidence(&[
        "extract",
        p(&doc),
        p(&catalog),
        "--pipeline",
        "keyword",
        "--answerer",
        "remote",
    ]);
    assert_eq!(no_endpoint.status.code(), Some(1));

    let stub = StubServer::start(|_| StubReply::Status(503, "down".into()));
    let down = evidence(&[
        "extract",
        p(&doc),
        p(&catalog),
        "--pipeline",
        "score",
        "--answerer",
        "remote",
        "--endpoint",
        stub.url(),
    ]);
    assert_eq!(down.status.code(), Some(2), "{}", String::from_utf8_lossy(&down.stderr));

    assert_eq!(evidence(&["--help"]).status.code(), Some(0));
    assert_eq!(evidence(&["extract", "--help"]).status.code(), Some(0));
}

#[test]
fn remote_answerer_via_local_stub() {
    let dir = tempfile::tempdir().unwrap();
    let doc = normalized(dir.path());
    let stub = StubServer::lexical();
    let out = evidence(&[
        "extract",
        p(&doc),
        p(&fixture_path("catalog.json")),
        "--pipeline",
        "score",
        "--answerer",
        "remote",
        "--endpoint",
        stub.url(),
    ]);
    let remote = stdout(&out);
    let local = extract_lines(&doc, "score");
    let remote: Value = serde_json::from_str(remote.trim()).unwrap();
    assert_eq!(remote["answer"], local[0]["answer"]);
}

#[test]
fn evaluate_prints_half_correct() {
    let dir = tempfile::tempdir().unwrap();
    let doc = normalized(dir.path());
    let base = extract_lines(&doc, "keyword").remove(0);
    let annotation_row = read_fixture("password_policy.annotations.tsv");
    let row = annotation_row.lines().nth(1).unwrap();

    let mut tsv = String::from("metric_name\tstart_offset\tend_offset\ttext\n");
    let mut records = Vec::new();
    for i in 0..10 {
        let name = format!("Metric{i}");
        tsv.push_str(&row.replacen("PasswordPolicyQ2", &name, 1));
        tsv.push('\n');
        let mut r = base.clone();
        r["metric_name"] = json!(name);
        r["record_id"] = json!(format!("rec-{i}"));
        if i % 2 == 1 {
            r["answer"]["text"] = json!("Backups run nightly.");
        }
        records.push(r);
    }
    let records_path = dir.path().join("records.jsonl");
    let tsv_path = dir.path().join("annotations.tsv");
    write_jsonl(&records_path, &records);
    std::fs::write(&tsv_path, tsv).unwrap();

    let table = stdout(&evidence(&["evaluate", p(&records_path), p(&tsv_path), p(&doc)]));
    let keyword = table.lines().find(|l| l.starts_with("Keyword-based")).unwrap();
    assert!(keyword.trim_end().ends_with("0.50"), "{table}");
    let whole = table.lines().find(|l| l.starts_with("Whole-doc")).unwrap();
    assert!(whole.trim_end().ends_with("0.00"), "{table}");
}

#[test]
fn report_reproduces_category_table() {
    let dir = tempfile::tempdir().unwrap();
    let doc = normalized(dir.path());
    let base = extract_lines(&doc, "keyword").remove(0);
    let mut records = Vec::new();
    let counts = [
        ("NoError", 68),
        ("PartialMatching", 11),
        ("FalseOrOtherError", 8),
        ("NotInDocument", 31),
    ];
    for (category, n) in counts {
        for i in 0..n {
            let mut r = base.clone();
            r["record_id"] = json!(format!("rec-{category}-{i}"));
            r["status"] = json!(if category == "NoError" { "Approved" } else { "Rejected" });
            r["reviewer_category"] = json!(category);
            r["reviewed_at"] = json!("2024-01-01T00:00:00Z");
            records.push(r);
        }
    }
    records.push(base);
    let path = dir.path().join("reviewed.jsonl");
    write_jsonl(&path, &records);

    let table = stdout(&evidence(&["report", p(&path)]));
    for expected in [
        "57.63",
        "9.32",
        "6.78",
        "26.27",
        "68/87 = 78.16%",
        "Unreviewed records: 1",
    ] {
        assert!(table.contains(expected), "missing {expected}:\n{table}");
    }
}

#[test]
fn malformed_records_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "{\"record_id\": 1}\n").unwrap();
    let out = evidence(&["report", p(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}
