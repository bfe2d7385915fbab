mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use microbrowse::corpus::{write_corpus, AdGroup, Creative, Slot};
use microbrowse::pipeline::{build_stats, prepare_pairs, PipelineConfig};
use microbrowse::statsdb::StatsDb;

const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/demo.json");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microbrowse"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run microbrowse")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn score_of(stdout: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix("score "))
        .expect("score line")
        .parse()
        .unwrap()
}

fn demo_model(dir: &Path, variant: &str) {
    ok(dir, &["gen-corpus", "--config", DEMO, "--out", "corpus.jsonl"]);
    ok(dir, &["build-stats", "--corpus", "corpus.jsonl", "--out", "stats.json"]);
    ok(
        dir,
        &["train", "--corpus", "corpus.jsonl", "--stats", "stats.json", "--variant", variant, "--out", "model.json"],
    );
}

#[test]
fn empty_corpus_gives_empty_stats() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-corpus", "--out", "empty.jsonl", "--adgroups", "0"]);
    assert_eq!(fs::read(dir.path().join("empty.jsonl")).unwrap(), b"");
    ok(dir.path(), &["build-stats", "--corpus", "empty.jsonl", "--out", "stats.json"]);
    let db = StatsDb::load(dir.path().join("stats.json")).unwrap();
    assert!(db.entries.is_empty());
    assert!(db.rewrites.is_empty());
}

#[test]
fn every_output_has_a_config_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-corpus", "--out", "c.jsonl", "--truth", "t.json", "--adgroups", "5"]);
    for f in ["c.jsonl.config.json", "t.json.config.json"] {
        let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(f)).unwrap()).unwrap();
        assert!(v.is_object(), "{f}");
    }
    let cfg = fs::read_to_string(dir.path().join("c.jsonl.config.json")).unwrap();
    assert!(cfg.contains("\"adgroups\": 5"), "{cfg}");
}

#[test]
fn fold_count_below_two_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["ablate", "--corpus", "x.jsonl", "--out-dir", "r", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_click_scale_names_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["gen-corpus", "--out", "c.jsonl", "--click-scale", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
}

#[test]
fn missing_model_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["score", "--model", "nope.json", "--stats", "nope.json", "--left", "a b", "--right", "c d"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn wordless_snippet_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["score", "--model", "m.json", "--stats", "s.json", "--left", "?!", "--right", "c d"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scoring_uses_the_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    demo_model(dir.path(), "M3");
    let model: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("model.json")).unwrap()).unwrap();
    let bias = model["bias"].as_f64().unwrap();

    // identical snippets leave only the bias
    let same = ok(
        dir.path(),
        &[
            "score", "--model", "model.json", "--stats", "stats.json",
            "--left", "XYZ Airlines", "--left", "Find cheap flights to New York.",
            "--right", "XYZ Airlines", "--right", "Find cheap flights to New York.",
        ],
    );
    assert!((score_of(&same) - bias).abs() < 1e-6, "{same}");
    assert!(bias.abs() < 0.1);

    // the corpus plants "get discounts" over "find cheap" and "flying" over "flights"
    let out = ok(
        dir.path(),
        &[
            "score", "--model", "model.json", "--stats", "stats.json",
            "--left", "XYZ Airlines", "--left", "Find cheap flights to New York.",
            "--left", "No reservation costs. Great rates",
            "--right", "XYZ Airlines", "--right", "Flying to New York? Get discounts.",
            "--right", "No reservation costs. Great rates!",
        ],
    );
    assert!(out.contains("winner right (right_better)"), "{out}");
    assert!(score_of(&out) < 0.0);
}

#[test]
fn demo_ablation_reports_six_variants() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-corpus", "--config", DEMO, "--out", "corpus.jsonl"]);
    ok(dir.path(), &["ablate", "--corpus", "corpus.jsonl", "--out-dir", "a", "--k", "3"]);
    ok(dir.path(), &["ablate", "--corpus", "corpus.jsonl", "--out-dir", "b", "--k", "3", "--seed", "9"]);
    let csv_a = fs::read_to_string(dir.path().join("a/report.csv")).unwrap();
    let csv_b = fs::read_to_string(dir.path().join("b/report.csv")).unwrap();
    let overall = |csv: &str| csv.lines().filter(|l| l.contains(",overall,")).count();
    assert_eq!(overall(&csv_a), 6);
    assert_eq!(overall(&csv_b), 6);
    assert_eq!(csv_a.lines().count(), csv_b.lines().count());
    assert_eq!(csv_a.lines().next(), csv_b.lines().next());
    let table = fs::read_to_string(dir.path().join("a/report.txt")).unwrap();
    for v in ["M1", "M2", "M3", "M4", "M5", "M6"] {
        assert!(table.lines().any(|l| l.starts_with(v)), "{v} missing");
    }
    assert_ne!(csv_a, csv_b, "a different seed should move the folds");
    let pos_a = fs::read_to_string(dir.path().join("a/positions.csv")).unwrap();
    let pos_b = fs::read_to_string(dir.path().join("b/positions.csv")).unwrap();
    assert_eq!(pos_a.lines().next(), pos_b.lines().next());
}

fn creative(id: &str, line: &str, impressions: u64, clicks: u64) -> Creative {
    Creative {
        creative_id: id.into(),
        slot: Slot::Top,
        lines: vec!["Acme Travel".into(), line.into()],
        impressions,
        clicks,
    }
}

#[test]
fn tiny_corpus_stats_match_recount() {
    let dir = tempfile::tempdir().unwrap();
    let groups = vec![AdGroup {
        adgroup_id: "g1".into(),
        keyword: "flights".into(),
        creatives: vec![
            creative("a", "cheap flights today", 1000, 100),
            creative("b", "cheap flying today", 1000, 60),
            creative("c", "great flights now", 1000, 20),
        ],
    }];
    let mut buf = Vec::new();
    write_corpus(&mut buf, &groups).unwrap();
    fs::write(dir.path().join("tiny.jsonl"), buf).unwrap();
    ok(dir.path(), &["build-stats", "--corpus", "tiny.jsonl", "--out", "stats.json"]);
    let db = StatsDb::load(dir.path().join("stats.json")).unwrap();

    let cfg = PipelineConfig::default();
    let pairs = prepare_pairs(&groups, &cfg).unwrap();
    assert_eq!(pairs.len(), 3);
    let (_, matches) = build_stats(&pairs, &cfg).unwrap();
    let items: Vec<_> = pairs.iter().zip(&matches).map(|(p, m)| (&p.pair, &p.diff, m)).collect();
    assert_eq!(db.entries, common::naive_recount(&items));
}
