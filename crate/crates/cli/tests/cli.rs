use std::path::Path;
use std::process::{Command, Output};

fn docbot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docbot"))
        .args(args)
        .env_remove("DOCBOT_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn gen(dir: &Path, contexts: &str) {
    let out = docbot(&["gen-data", "--out", dir.to_str().unwrap(), "--contexts", contexts, "--seed", "11"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn gen_data_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    gen(a.path(), "60");
    gen(b.path(), "60");
    for file in ["train.jsonl", "valid.jsonl", "test.jsonl", "catalog.json"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{file} differs between runs");
    }
}

#[test]
fn eval_json_agrees_with_the_table() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "200");
    let data = dir.path().join("test.jsonl");
    let args = ["eval", "--data", data.to_str().unwrap(), "--oracle", "--tfidf", "--random", "--seed", "5"];
    let table = docbot(&args);
    assert!(table.status.success(), "{}", stderr(&table));
    let mut json_args = args.to_vec();
    json_args.push("--json");
    let json = docbot(&json_args);
    assert!(json.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(parsed["contexts"], 20);

    let table = stdout(&table);
    for result in parsed["results"].as_array().unwrap() {
        let name = result["name"].as_str().unwrap();
        let line = table.lines().find(|l| l.starts_with(name)).expect("row for every result");
        let cells: Vec<f64> = line.split_whitespace().skip(1).map(|c| c.parse().unwrap()).collect();
        let json_cells: Vec<f64> = ["R10@1", "R10@2", "R10@5"]
            .iter()
            .map(|k| result["recalls"][k].as_f64().unwrap())
            .collect();
        assert_eq!(cells, json_cells, "{name}");
        if name == "oracle" {
            assert_eq!(cells, vec![1.0, 1.0, 1.0]);
        }
    }
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(docbot(&[]).status.code(), Some(1));
    assert_eq!(docbot(&["eval", "--bogus"]).status.code(), Some(1));
    assert_eq!(docbot(&["--help"]).status.code(), Some(0));

    let missing = dir.path().join("missing.jsonl");
    let out = docbot(&["eval", "--data", missing.to_str().unwrap(), "--oracle"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: "));

    gen(dir.path(), "20");
    let data = dir.path().join("valid.jsonl");
    let out = docbot(&["eval", "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "nothing to evaluate is a usage error");

    let model = dir.path().join("model.bin");
    std::fs::write(&model, b"not a model").unwrap();
    let out = docbot(&["eval", "--data", data.to_str().unwrap(), "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn malformed_jsonl_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    std::fs::write(
        &data,
        "{\"context\":[\"hi\"],\"response\":\"hello\",\"label\":1}\n\n{\"context\":\"oops\"}\n",
    )
    .unwrap();
    let out = docbot(&["eval", "--data", data.to_str().unwrap(), "--oracle", "--n", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains(":3:") || err.contains("line 3"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn ingest_then_rebuild_indexes() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let doc = dir.path().join("zenbook.txt");
    std::fs::write(&doc, docbot::synth::SAMPLE_DOCUMENT).unwrap();
    let dd = data_dir.to_str().unwrap();

    let out = docbot(&["ingest", doc.to_str().unwrap(), "--data-dir", dd]);
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    assert!(line.starts_with("doc-"));
    assert!(line.contains("10 sentences"), "{line}");
    let id = line.split('\t').next().unwrap().to_string();

    let idx = data_dir.join("documents").join(format!("{id}.idx"));
    let before = std::fs::read(&idx).unwrap();
    std::fs::remove_file(&idx).unwrap();
    let out = docbot(&["index", "--rebuild", "--data-dir", dd]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains(&id));
    assert_eq!(std::fs::read(&idx).unwrap(), before);

    let out = docbot(&["ingest", dir.path().join("nope.txt").to_str().unwrap(), "--data-dir", dd]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_passes_every_case() {
    let out = docbot(&["gradcheck"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().filter(|l| l.starts_with("ok")).count() >= 15);
    assert!(text.contains(", 0 failed"));
}
