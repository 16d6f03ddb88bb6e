use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_phonosem");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
[corpus]
n_single = 4
n_double = 4
min_per_contrast = 8
contrasts = ["a-i", "i-o", "e-o", "b-p", "d-t", "k-l", "m-n", "s-z"]

[[raters]]
id = "r1"
kind = "synthetic"
noise_sd = 5.0
seed = 1
random_weights = { magnitude = 8.0, seed = 9 }

[[raters]]
id = "r2"
kind = "synthetic"
noise_sd = 5.0
seed = 2
random_weights = { magnitude = 8.0, seed = 9 }

[effects]
n_iter = 2000
n_splits = 20
"#;

#[test]
fn generate_mini_corpus_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &["generate", "--contrast", "e-o", "--pairs", "4"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let pairs = std::fs::read_to_string(dir.path().join("out/corpus/pairs.tsv")).unwrap();
    let rows: Vec<&str> = pairs.lines().filter(|l| l.starts_with("e-o.")).collect();
    assert_eq!(rows.len(), 4);
    assert!(pairs.contains("#config_hash="));
}

#[test]
fn every_stage_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), SMALL).unwrap();
    let stages = ["generate", "rate", "analyze", "predict", "report"];
    let snapshot = |d: &Path| {
        let mut files: Vec<(String, Vec<u8>)> = walk(&d.join("out"))
            .into_iter()
            .map(|p| (p.display().to_string(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    for s in stages {
        let o = run(dir.path(), &["--config", "p.toml", s]);
        assert!(o.status.success(), "{s}: {}", stderr(&o));
    }
    let first = snapshot(dir.path());
    assert!(first.len() >= 15, "{} files", first.len());
    for s in stages {
        assert!(run(dir.path(), &["--config", "p.toml", s]).status.success());
    }
    assert_eq!(first, snapshot(dir.path()));
    let report = std::fs::read_to_string(dir.path().join("out/report.md")).unwrap();
    assert!(report.contains("## Articulatory prediction"));
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn missing_upstream_names_the_stage_to_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), SMALL).unwrap();
    let cases = [
        ("rate", "phonosem generate"),
        ("analyze", "phonosem generate"),
        ("predict", "phonosem analyze"),
        ("behavior", "phonosem serve-study"),
    ];
    for (stage, hint) in cases {
        let o = run(dir.path(), &["--config", "p.toml", stage]);
        assert_eq!(o.status.code(), Some(4), "{stage}: {}", stderr(&o));
        assert!(stderr(&o).contains(hint), "{stage}: {}", stderr(&o));
    }
    assert!(run(dir.path(), &["--config", "p.toml", "generate"])
        .status
        .success());
    let o = run(dir.path(), &["--config", "p.toml", "analyze"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("phonosem rate"));
}

#[test]
fn analyze_on_empty_store_is_a_computation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), SMALL).unwrap();
    assert!(run(dir.path(), &["--config", "p.toml", "generate"])
        .status
        .success());
    std::fs::write(dir.path().join("out/ratings.tsv"), "").unwrap();
    let o = run(dir.path(), &["--config", "p.toml", "analyze"]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("empty"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "[effects]\nq_threshold = 2.0\n",
    )
    .unwrap();
    let o = run(dir.path(), &["--config", "bad.toml", "generate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    std::fs::write(dir.path().join("typo.toml"), "[corpus]\nn_singel = 3\n").unwrap();
    assert_eq!(
        run(dir.path(), &["--config", "typo.toml", "generate"])
            .status
            .code(),
        Some(2)
    );
    let o = run(dir.path(), &["rate"]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "no raters configured: {}",
        stderr(&o)
    );
    let o = run(dir.path(), &["--config", "missing.toml", "generate"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn corrupt_artifact_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.toml"), SMALL).unwrap();
    assert!(run(dir.path(), &["--config", "p.toml", "generate"])
        .status
        .success());
    std::fs::write(dir.path().join("out/ratings.tsv"), "#schema=other/9\nx\n").unwrap();
    let o = run(dir.path(), &["--config", "p.toml", "analyze"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn behavior_stage_reads_exported_trials() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = phonosem_core::behavior::trials_header();
    for (p, chosen) in [("p1", "A"), ("p2", "A"), ("p3", "B")] {
        for (i, dim) in ["size", "shape", "weight"].iter().enumerate() {
            text.push_str(&format!(
                "{p}\ten\tpair{i}\t{dim}\thigh\t{chosen}\tA\tfalse\tunix:0\tTEXT\n"
            ));
        }
        // p3 fails its attention check and is excluded.
        let check = if p == "p3" { "A" } else { "B" };
        text.push_str(&format!(
            "{p}\ten\tcheck\tsize\thigh\t{check}\tB\ttrue\tunix:0\tTEXT\n"
        ));
    }
    std::fs::write(dir.path().join("trials.tsv"), text).unwrap();
    let o = run(dir.path(), &["behavior", "--trials", "trials.tsv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let acc = std::fs::read_to_string(dir.path().join("out/behavior/accuracy.tsv")).unwrap();
    let overall = acc.lines().find(|l| l.starts_with("overall")).unwrap();
    let fields: Vec<&str> = overall.split('\t').collect();
    assert_eq!(&fields[..5], ["overall", "all", "6", "6", "1"]);
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/behavior/behavior.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["study"]["excluded"][0], "p3");
}
