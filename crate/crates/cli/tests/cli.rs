use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use flowrec_core::provenance::serialize_repository;
use flowrec_core::synthetic::toy_repository;

fn flowrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowrec"))
        .args(args)
        .env_remove("FLOWREC_LOG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = flowrec(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("repo.json"), serialize_repository(&toy_repository())).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn manifest(path: &Path) -> Value {
    let mut name = path.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    read_json(&path.with_file_name(name))
}

fn without_timestamps(mut m: Value) -> Value {
    let obj = m.as_object_mut().unwrap();
    obj.remove("started_at");
    obj.remove("finished_at");
    m
}

const FAST: [&str; 6] = ["--dim", "16", "--epochs", "3", "--lr", "0.05"];

#[test]
fn train_with_default_hyperparameters_writes_model_and_manifest() {
    let ws = Workspace::new();
    let (repo, model) = (ws.arg("repo.json"), ws.arg("model.bin"));
    let stdout = ok(&[
        "train", "--repo", &repo, "--strategy", "intra", "--dedup", "keep", "--dim", "128", "--lr", "0.001",
        "--epochs", "20", "--negatives", "5", "--seed", "42", "--out", &model,
    ]);
    assert!(stdout.contains("trained on 75 paths"), "{stdout}");

    let m = manifest(&ws.path("model.bin"));
    assert_eq!(m["subcommand"], "train");
    assert_eq!(m["seed"], 42);
    assert_eq!(m["config"]["learning_rate"], 0.001);
    assert_eq!(m["config"]["dim"], 128);
    assert_eq!(m["config"]["max_epochs"], 20);
    assert_eq!(m["config"]["negatives"], 5);
    assert_eq!(m["config"]["strategy"]["kind"], "intra");
    assert_eq!(m["config"]["dedup"], "keep");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["started_at"].is_string() && m["finished_at"].is_string());
    let input = &m["inputs"][0];
    assert!(input["path"].as_str().unwrap().ends_with("repo.json"));
    assert_eq!(input["sha256"].as_str().unwrap().len(), 64);

    let saved = read_json(&ws.path("model.bin"));
    assert_eq!(saved["train_config"]["dim"], 128);
    assert_eq!(saved["format_version"], 1);
}

#[test]
fn identical_runs_give_identical_outputs() {
    let ws = Workspace::new();
    let repo = ws.arg("repo.json");
    for name in ["a.bin", "b.bin"] {
        let mut args = vec!["train", "--repo", &repo, "--seed", "7"];
        args.extend(FAST);
        let out = ws.arg(name);
        args.extend(["--out", &out]);
        ok(&args);
    }
    assert_eq!(std::fs::read(ws.path("a.bin")).unwrap(), std::fs::read(ws.path("b.bin")).unwrap());
    let strip = |m: Value| {
        let mut m = without_timestamps(m);
        m.as_object_mut().unwrap().remove("inputs");
        m
    };
    assert_eq!(strip(manifest(&ws.path("a.bin"))), strip(manifest(&ws.path("b.bin"))));

    for name in ["a.txt", "b.txt"] {
        ok(&[
            "gen-paths", "--repo", &repo, "--strategy", "inter", "--walk-length", "4", "--walks-per-service", "3",
            "--seed", "1", "--out", &ws.arg(name),
        ]);
    }
    let a = std::fs::read_to_string(ws.path("a.txt")).unwrap();
    assert_eq!(a, std::fs::read_to_string(ws.path("b.txt")).unwrap());
    assert_eq!(
        without_timestamps(manifest(&ws.path("a.txt")))["config"],
        without_timestamps(manifest(&ws.path("b.txt")))["config"]
    );
}

#[test]
fn gen_paths_respects_walk_flags() {
    let ws = Workspace::new();
    let repo = ws.arg("repo.json");
    let corpus = ok(&[
        "gen-paths", "--repo", &repo, "--strategy", "inter", "--walk-length", "3", "--walks-per-service", "2",
        "--mode", "uniform", "--seed", "5", "--excluded", &ws.arg("ex.txt"),
    ]);
    let lines: Vec<&str> = corpus.lines().collect();
    assert!(!lines.is_empty());
    for line in &lines {
        let n = line.split(' ').count();
        assert!((2..=3).contains(&n), "{line}");
    }
    let sidecar = std::fs::read_to_string(ws.path("ex.txt")).unwrap();
    assert_eq!(sidecar.lines().count(), lines.len());
    // inter excluded set is the path itself
    assert_eq!(
        {
            let mut ids: Vec<&str> = lines[0].split(' ').collect();
            ids.sort();
            ids.join(" ")
        },
        sidecar.lines().next().unwrap()
    );

    let dedup = ok(&["gen-paths", "--repo", &repo, "--dedup", "remove"]);
    let kept = ok(&["gen-paths", "--repo", &repo]);
    assert!(dedup.lines().count() < kept.lines().count());
}

#[test]
fn build_kg_dumps_every_relationship() {
    let ws = Workspace::new();
    ok(&["build-kg", "--repo", &ws.arg("repo.json"), "--out", &ws.arg("kg.tsv")]);
    let dump = std::fs::read_to_string(ws.path("kg.tsv")).unwrap();
    let edges: usize = toy_repository().workflows().iter().map(|w| w.edges.len()).sum();
    assert_eq!(dump.lines().count(), edges);
    assert!(dump.lines().all(|l| l.split('\t').count() == 3));
    assert_eq!(manifest(&ws.path("kg.tsv"))["subcommand"], "build-kg");
}

#[test]
fn recommend_prints_a_ranked_table() {
    let ws = Workspace::new();
    let model = ws.arg("model.bin");
    ok(&[
        "train", "--repo", &ws.arg("repo.json"), "--dim", "32", "--lr", "0.05", "--epochs", "200", "--out", &model,
    ]);
    let repo = toy_repository();
    let w = repo.workflow("w1a").unwrap();
    let pw = flowrec_core::recommender::PartialWorkflow::upstream_of(w, "c1s4").unwrap();
    std::fs::write(ws.path("pw.json"), serde_json::to_string(&pw).unwrap()).unwrap();

    let table = ok(&["recommend", "--model", &model, "--workflow", &ws.arg("pw.json"), "--anchor", "c1s4", "--top-k", "5"]);
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].split_whitespace().nth(1) == Some("c1s5"), "{table}");

    let json = ok(&[
        "recommend", "--model", &model, "--workflow", &ws.arg("pw.json"), "--anchor", "c1s4", "--top-k", "3", "--json",
    ]);
    let rec: Value = serde_json::from_str(&json).unwrap();
    let cands = rec["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 3);
    let probs: Vec<f64> = cands.iter().map(|c| c["probability"].as_f64().unwrap()).collect();
    assert!(probs.windows(2).all(|p| p[0] >= p[1]));
}

#[test]
fn evaluate_reports_and_echoes_ks() {
    let ws = Workspace::new();
    let repo = ws.arg("repo.json");
    let mut args = vec!["evaluate", "--repo", &repo];
    args.extend(FAST);
    let report = ws.arg("report.json");
    args.extend(["--out", &report]);
    let table = ok(&args);
    assert!(table.contains("Recall@3") && table.contains("MRR") && table.contains("Diversity@20"));
    let doc = read_json(&ws.path("report.json"));
    assert_eq!(doc["config"]["ks"], serde_json::json!([3, 5, 10, 20]));
    assert_eq!(doc["config"]["train_fraction"], 0.8);
    assert_eq!(doc["corpus"]["workflows"], 20);
    assert_eq!(manifest(&ws.path("report.json"))["subcommand"], "evaluate");

    // a given model is evaluated as is
    let model = ws.arg("model.bin");
    let mut train = vec!["train", "--repo", &repo];
    train.extend(FAST);
    train.extend(["--out", &model]);
    ok(&train);
    let table = ok(&["evaluate", "--repo", &repo, "--model", &model, "--ks", "1,2"]);
    assert!(table.contains("Recall@1") && table.contains("Recall@2") && !table.contains("Recall@3"));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    let repo = ws.arg("repo.json");
    assert_eq!(flowrec(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(flowrec(&[]).status.code(), Some(2));

    let conflict = flowrec(&["gen-paths", "--repo", &repo, "--walk-length", "4"]);
    assert_eq!(conflict.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&conflict.stderr).contains("--strategy inter"));

    let missing = flowrec(&["build-kg", "--repo", &ws.arg("nope.json"), "--out", &ws.arg("kg.tsv")]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.json"));
    assert!(!ws.path("kg.tsv").exists());

    std::fs::write(ws.path("bad.json"), "{\"workflows\": 3}").unwrap();
    let bad = flowrec(&["train", "--repo", &ws.arg("bad.json"), "--out", &ws.arg("m.bin")]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));

    let invalid = flowrec(&["train", "--repo", &repo, "--lr", "0", "--out", &ws.arg("m.bin")]);
    assert_eq!(invalid.status.code(), Some(1));
}

#[test]
fn help_lists_defaults() {
    for (sub, defaults) in [
        ("train", &["[default: 0.001]", "[default: 128]", "[default: 20]", "[default: 5]", "[default: 42]"][..]),
        ("gen-paths", &["[default: 15]", "[default: 10]", "[default: probabilistic]", "[default: keep]"][..]),
        ("evaluate", &["[default: 0.8]", "[default: 3,5,10,20]"][..]),
        ("recommend", &["[default: 5]"][..]),
        ("serve", &["[default: 8080]", "[default: 3600]"][..]),
        ("build-kg", &[][..]),
    ] {
        let help = ok(&[sub, "--help"]);
        for d in defaults {
            assert!(help.contains(d), "{sub} help lacks {d}:\n{help}");
        }
    }
}

#[test]
fn log_level_comes_from_the_environment() {
    let ws = Workspace::new();
    let out = Command::new(env!("CARGO_BIN_EXE_flowrec"))
        .args(["build-kg", "--repo", &ws.arg("repo.json"), "--out", &ws.arg("kg.tsv")])
        .env("FLOWREC_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("relationships"));
    let quiet = flowrec(&["build-kg", "--repo", &ws.arg("repo.json"), "--out", &ws.arg("kg.tsv")]);
    assert!(quiet.stderr.is_empty());
}

fn http_get(addr: &str, path: &str) -> String {
    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut reply = String::new();
    stream.read_to_string(&mut reply).unwrap();
    reply
}

#[test]
fn serve_answers_over_tcp_and_serves_the_ui() {
    use std::io::{BufRead, BufReader};
    let ws = Workspace::new();
    let model = ws.arg("model.bin");
    let repo = ws.arg("repo.json");
    let mut args = vec!["train", "--repo", &repo, "--out", &model];
    args.extend(FAST);
    ok(&args);
    std::fs::create_dir(ws.path("ui")).unwrap();
    std::fs::write(ws.path("ui/index.html"), "<p>composer</p>").unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_flowrec"))
        .args(["serve", "--model", &model, "--port", "0", "--ui-dir", &ws.arg("ui")])
        .env("FLOWREC_LOG", "info")
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server exited early").unwrap();
        if let Some(rest) = line.split("listening on ").nth(1) {
            break rest.trim().to_string();
        }
    };

    let health = http_get(&addr, "/health");
    let fingerprint = flowrec_core::seqmodel::Model::load(ws.path("model.bin")).unwrap().fingerprint();
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.contains(&fingerprint));
    let page = http_get(&addr, "/index.html");
    assert!(page.starts_with("HTTP/1.1 200") && page.contains("<p>composer</p>"), "{page}");
    let missing = http_get(&addr, "/sessions/00000000-0000-0000-0000-000000000000");
    assert!(missing.starts_with("HTTP/1.1 404"));

    child.kill().unwrap();
    child.wait().unwrap();
}
