use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic").join(name)
}

fn mwehsd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwehsd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tag_writes_one_record_per_tweet() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tags.jsonl");
    let lexicon = fixture("lexicon.tsv");
    let corpus = fixture("corpus.jsonl");
    let args = [
        "tag",
        "--lexicon",
        path_str(&lexicon),
        "--corpus",
        path_str(&corpus),
        "--group",
        "mweall",
        "--out",
        path_str(&out),
    ];
    let run = mwehsd(&args);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 300);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["id", "lemmas", "tags", "matches"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(first["matches"][1]["entry"], "give a crap");

    // Same inputs, same bytes.
    let again = dir.path().join("tags2.jsonl");
    let mut args2 = args;
    args2[8] = path_str(&again);
    assert_eq!(mwehsd(&args2).status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn missing_flag_is_a_usage_error() {
    let run = mwehsd(&["tag", "--corpus", "c.jsonl", "--out", "x"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("--lexicon"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let run = mwehsd(&["frobnicate"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    let run = mwehsd(&["--help"]);
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8_lossy(&run.stdout);
    for cmd in [
        "lexicon-check",
        "preprocess",
        "tag",
        "stats",
        "features",
        "train",
        "predict",
        "evaluate",
        "significance",
    ] {
        assert!(text.contains(cmd), "{cmd}");
    }
}

#[test]
fn malformed_lexicon_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let lexicon = dir.path().join("lex.tsv");
    let mut text = String::new();
    for i in 0..6 {
        text += &format!("w{i} x\tAdverb\n");
    }
    text += "no tab on this line\n";
    std::fs::write(&lexicon, text).unwrap();
    let run = mwehsd(&["lexicon-check", "--lexicon", path_str(&lexicon)]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("line 7"), "{}", stderr(&run));
}

#[test]
fn lexicon_check_selects_categories() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    std::fs::write(
        &counts,
        "category,hateful_only,nonhateful_only,both\nAdverb,1,5,194\nAuxiliary,4,0,475\nSymbol,0,0,0\n",
    )
    .unwrap();
    let lexicon = fixture("lexicon.tsv");
    let run = mwehsd(&[
        "lexicon-check",
        "--lexicon",
        path_str(&lexicon),
        "--counts",
        path_str(&counts),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("selected Adverb\n"), "{stdout}");
}

#[test]
fn stats_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let lexicon = fixture("lexicon.tsv");
    let corpus = fixture("corpus.jsonl");
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let run = mwehsd(&[
            "stats",
            "--lexicon",
            path_str(&lexicon),
            "--corpus",
            path_str(&corpus),
            "--out",
            path_str(&out),
        ]);
        assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    }
    for file in ["histogram.csv", "partition.csv", "class_counts.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let hist = std::fs::read_to_string(dir.path().join("a/histogram.csv")).unwrap();
    assert_eq!(hist, "count,tweets,percent\n1,200,66.6667\n2,100,33.3333\n");
}

#[test]
fn train_predict_evaluate_significance() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture("experiment.json");
    let lexicon = fixture("lexicon.tsv");
    let corpus = fixture("corpus.jsonl");
    let out = dir.path().join("run");
    let run = mwehsd(&["train", "--config", path_str(&config), "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    for f in ["report.json", "report_subset.json", "history_8.json", "model_best.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let pred = dir.path().join("pred.jsonl");
    let model = out.join("model_best.json");
    let run = mwehsd(&[
        "predict",
        "--model",
        path_str(&model),
        "--lexicon",
        path_str(&lexicon),
        "--corpus",
        path_str(&corpus),
        "--out",
        path_str(&pred),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    assert_eq!(std::fs::read_to_string(&pred).unwrap().lines().count(), 300);

    let report = dir.path().join("eval/report.json");
    let run = mwehsd(&[
        "evaluate",
        "--gold",
        path_str(&corpus),
        "--pred",
        path_str(&pred),
        "--lexicon",
        path_str(&lexicon),
        "--out",
        path_str(&report),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let full: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(full["n"], 300);
    assert!(dir.path().join("eval/report_subset.json").exists());

    let sig = dir.path().join("sig.json");
    let run = mwehsd(&[
        "significance",
        "--gold",
        path_str(&corpus),
        "--pred-a",
        path_str(&pred),
        "--pred-b",
        path_str(&pred),
        "--out",
        path_str(&sig),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&sig).unwrap()).unwrap();
    assert_eq!(result["p_value"], 1.0);
    assert_eq!(result["significant"], false);
}

#[test]
fn train_without_config_is_a_data_error() {
    let run = mwehsd(&["train"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("--config"));
}

#[test]
fn features_dump_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let lexicon = fixture("lexicon.tsv");
    let corpus = fixture("corpus.jsonl");
    let mut outputs = Vec::new();
    for name in ["f1.jsonl", "f2.jsonl"] {
        let out = dir.path().join(name);
        let run = mwehsd(&[
            "features",
            "--seed",
            "4",
            "--lexicon",
            path_str(&lexicon),
            "--corpus",
            path_str(&corpus),
            "--synthetic-dim",
            "4",
            "--max-tokens",
            "16",
            "--out",
            path_str(&out),
        ]);
        assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
