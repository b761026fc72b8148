//! The `lexlstm` binary driven as a subprocess.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lexlstm");

fn toy_dict() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_en.tsv")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--embed-dim", "8", "--n", "2", "--hidden1", "8", "--hidden2", "6", "--epochs1", "3", "--epochs2", "3",
];

struct Synth {
    _dir: tempfile::TempDir,
    root: PathBuf,
    corpus: PathBuf,
    lexicon: PathBuf,
}

fn synth(train: &str, test: &str) -> Synth {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    ok(&["synth", "--out-dir", s(&root), "--train", train, "--test", test]);
    Synth {
        corpus: root.join("corpus.jsonl"),
        lexicon: root.join("lexicon.tsv"),
        root,
        _dir: dir,
    }
}

fn train_all(sy: &Synth, run_dir: &Path) {
    let mut args = vec!["train-level1", "--corpus", s(&sy.corpus), "--dict", s(&sy.lexicon), "--run-dir", s(run_dir)];
    args.extend_from_slice(SMALL);
    ok(&args);
    ok(&["distill", "--run-dir", s(run_dir)]);
    ok(&["train-level2", "--run-dir", s(run_dir)]);
}

#[test]
fn full_pipeline_produces_bundle_metrics_and_predictions() {
    let sy = synth("30", "10");
    let rd = sy.root.join("run");
    let corpus_before = std::fs::read(&sy.corpus).unwrap();
    train_all(&sy, &rd);
    for f in ["inputs.json", "level1.json", "distilled.jsonl", "level2.json", "bundle.json", "metrics.jsonl"] {
        assert!(rd.join(f).is_file(), "{f} missing");
    }
    let report = ok(&["eval", "--run-dir", s(&rd)]);
    assert!(report.starts_with("accuracy "), "{report}");
    let l1 = ok(&["eval", "--run-dir", s(&rd), "--level1", "--split", "train"]);
    assert!(l1.contains("gold\\pred"));

    let metrics = std::fs::read_to_string(rd.join("metrics.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records[0]["command"], "train-level1");
    let run_id = records[0]["run_id"].clone();
    assert!(records.iter().all(|r| r["run_id"] == run_id));
    let epochs: Vec<_> = records.iter().filter(|r| r.get("epoch").is_some()).collect();
    assert_eq!(epochs.len(), 6);
    for r in &epochs {
        assert_eq!(r["split"], "train");
        assert!(r["loss"].is_f64() && r["accuracy"].is_f64());
    }
    assert_eq!(records.last().unwrap()["command"], "eval");

    let pred = ok(&["predict", "--run-dir", s(&rd), "the room is nice, but the food is awful"]);
    let v: serde_json::Value = serde_json::from_str(pred.trim()).unwrap();
    assert_eq!(v["prediction"]["beta"].as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read(&sy.corpus).unwrap(), corpus_before, "inputs are never rewritten");
}

#[test]
fn metrics_logs_are_byte_identical_across_runs() {
    let sy = synth("20", "6");
    let (a, b) = (sy.root.join("a"), sy.root.join("b"));
    train_all(&sy, &a);
    train_all(&sy, &b);
    ok(&["eval", "--run-dir", s(&a)]);
    ok(&["eval", "--run-dir", s(&b)]);
    assert_eq!(std::fs::read(a.join("metrics.jsonl")).unwrap(), std::fs::read(b.join("metrics.jsonl")).unwrap());
    assert_eq!(std::fs::read(a.join("bundle.json")).unwrap(), std::fs::read(b.join("bundle.json")).unwrap());
}

#[test]
fn level2_before_distill_is_a_usage_error() {
    let sy = synth("10", "4");
    let rd = sy.root.join("run");
    let mut args = vec!["train-level1", "--corpus", s(&sy.corpus), "--dict", s(&sy.lexicon), "--run-dir", s(&rd)];
    args.extend_from_slice(SMALL);
    ok(&args);
    let out = run(&["train-level2", "--run-dir", s(&rd)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("distill"));
}

#[test]
fn missing_files_and_bad_flags_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    assert_eq!(run(&["stats", s(&missing)]).status.code(), Some(1));
    assert_eq!(run(&["train-level1", "--corpus", s(&missing), "--dict", s(&toy_dict()), "--run-dir", "x"]).status.code(), Some(1));
    assert_eq!(run(&["gradcheck", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["aggregate", "--scores", "1,0.7"]).status.code(), Some(1));
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "hidden1 = 0\n").unwrap();
    let sy = synth("4", "2");
    let out = run(&[
        "train-level1", "--corpus", s(&sy.corpus), "--dict", s(&sy.lexicon), "--run-dir", s(&sy.root.join("r")),
        "--config", s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn divergence_exits_two() {
    let sy = synth("10", "4");
    let out = run(&[
        "train-level1", "--corpus", s(&sy.corpus), "--dict", s(&sy.lexicon), "--run-dir", s(&sy.root.join("r")),
        "--embed-dim", "4", "--hidden1", "4", "--n", "1", "--epochs1", "5", "--optimizer", "sgd", "--lr", "1e300",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn lexrule_golden_scores() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "it is good\nit is not bad\nit is not so bad\n").unwrap();
    let out = ok(&["lexrule", "--dict", s(&toy_dict()), s(&input)]);
    let scores: Vec<f64> = out
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["score"].as_f64().unwrap())
        .collect();
    assert_eq!(scores, vec![1.0, 0.25, -0.75]);
}

#[test]
fn aggregate_and_split_and_stats() {
    let out = ok(&["aggregate", "--scores", "1,1,1,0.5,1"]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!((v["label"].as_str(), v["mean"].as_f64()), (Some("positive"), Some(0.9)));

    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    let lines: String = (0..10)
        .map(|i| format!("{{\"id\":\"s{i}\",\"text\":\"a, but b\",\"annotator_scores\":[1,1,0.5]}}\n"))
        .collect();
    std::fs::write(&corpus, &lines).unwrap();
    let split_path = dir.path().join("split.jsonl");
    ok(&["split", s(&corpus), "--seed", "3", "--test-fraction", "0.3", "--out", s(&split_path)]);
    let split = std::fs::read_to_string(&split_path).unwrap();
    assert_eq!(split.matches("\"split\":\"test\"").count(), 3);
    assert_eq!(split.matches("\"split\":\"train\"").count(), 7);
    assert_eq!(std::fs::read_to_string(&corpus).unwrap(), lines);
    let again = dir.path().join("again.jsonl");
    ok(&["split", s(&corpus), "--seed", "3", "--test-fraction", "0.3", "--out", s(&again)]);
    assert_eq!(std::fs::read(&again).unwrap(), split.as_bytes());

    let stats = ok(&["stats", s(&corpus)]);
    assert!(stats.contains("Total"), "{stats}");
    let agg = ok(&["aggregate", s(&corpus)]);
    assert_eq!(agg.lines().count(), 10);
}

#[test]
fn gradcheck_reports_every_op_and_fails_on_corruption() {
    let good = ok(&["gradcheck", "--seeds", "1"]);
    for op in [
        "lstm_cell", "bilstm", "attention_plain", "attention_lex", "attention_lex_pos", "attention_conj",
        "rho_hot[keyword]", "rho_hot[pos]", "rho_hot[conjunction]", "level1_loss", "level2_loss",
    ] {
        assert!(good.contains(op), "{op} missing from report");
    }
    let bad = run(&["gradcheck", "--seeds", "1", "--only", "bilstm", "--corrupt", "bilstm"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAILED"));
}
