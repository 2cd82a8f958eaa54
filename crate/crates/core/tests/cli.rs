//! The `ddtm` binary end to end: artifacts, determinism and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddtm::model::{encode_checkpoint, HiddenConfig, ModelParams, Variant};

const CONFIG: &str = r#"
seed = 7
workers = 1

[pipeline]
test_fraction = 0.25

[hidden]
bits = 4

[train]
epochs = 2
batch_size = 8

[ais]
num_intermediate = 50
num_runs = 3
"#;

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/sample_threads.jsonl")
}

fn ddtm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddtm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ddtm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    ddtm(dir, args).status.code().expect("exit code")
}

/// Preprocess, train and evaluate into `run`, all under `dir`.
fn pipeline(dir: &Path, run: &str) {
    std::fs::write(dir.join("run.toml"), CONFIG).unwrap();
    let input = sample();
    ok(
        dir,
        &[
            "--config",
            "run.toml",
            "preprocess",
            "--input",
            input.to_str().unwrap(),
            "--out",
            "corpus",
        ],
    );
    let model = format!("{run}/train");
    ok(
        dir,
        &[
            "--config", "run.toml", "train", "--corpus", "corpus", "--out", &model,
        ],
    );
    let ckpt = format!("{model}/model.ddtm");
    let eval = format!("{run}/eval");
    ok(
        dir,
        &[
            "--config",
            "run.toml",
            "eval",
            "--corpus",
            "corpus",
            "--checkpoint",
            &ckpt,
            "--out",
            &eval,
        ],
    );
}

#[test]
fn pipeline_artifacts_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "a");
    pipeline(dir.path(), "b");
    let read = |run: &str, file: &str| std::fs::read(dir.path().join(run).join(file)).unwrap();
    for file in ["train/model.ddtm", "eval/report.json", "eval/pr_curve.csv"] {
        assert_eq!(read("a", file), read("b", file), "{file} differs");
    }
    // The last log column is wall-clock time.
    let without_clock = |run: &str| -> Vec<String> {
        String::from_utf8(read(run, "train/train_log.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(without_clock("a"), without_clock("b"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/eval/report.json")).unwrap())
            .unwrap();
    assert!(report["perplexity_nats"].as_f64().unwrap() > 0.0);
    let effective =
        std::fs::read_to_string(dir.path().join("a/train/effective_config.toml")).unwrap();
    assert!(effective.contains("seed = 7"));
}

#[test]
fn inspection_commands_read_a_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    pipeline(d, "m");
    let ckpt = "m/train/model.ddtm";
    ok(
        d,
        &[
            "--config",
            "run.toml",
            "infer",
            "--corpus",
            "corpus",
            "--checkpoint",
            ckpt,
            "--out",
            "bits.jsonl",
        ],
    );
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(d.join("bits.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.iter().filter(|l| l.get("psi0").is_some()).count(), 48);
    for l in lines.iter().filter(|l| l.get("psi").is_some()) {
        assert_eq!(l["psi"].as_array().unwrap().len(), 2);
    }

    let hits = ok(
        d,
        &[
            "--config",
            "run.toml",
            "retrieve",
            "--corpus",
            "corpus",
            "--checkpoint",
            ckpt,
            "--query",
            "t00c0",
            "--k",
            "5",
        ],
    );
    assert_eq!(hits.lines().filter(|l| !l.starts_with("rank")).count(), 5);

    let topics = ok(
        d,
        &[
            "--config",
            "run.toml",
            "topics",
            "--corpus",
            "corpus",
            "--checkpoint",
            ckpt,
            "--comment",
            "t01c0",
            "--top",
            "3",
        ],
    );
    let topics: serde_json::Value = serde_json::from_str(&topics).unwrap();
    assert!(topics.is_object());
}

#[test]
fn synth_writes_a_corpus_and_its_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let toml = "seed = 3\n[synth]\nthreads = 20\nregimes = 2\n[synth.planted]\nvocab_size = 6\ncomment_bits = 2\nthread_bits = 2\n";
    std::fs::write(d.join("synth.toml"), toml).unwrap();
    ok(d, &["--config", "synth.toml", "synth", "--out", "s"]);
    for f in [
        "threads.jsonl",
        "vocab.txt",
        "splits.json",
        "hidden.jsonl",
        "true_params_regime0.ddtm",
        "true_params_regime1.ddtm",
    ] {
        assert!(d.join("s").join(f).exists(), "{f}");
    }
    let corpus = ddtm::corpus::read_corpus(&d.join("s")).unwrap();
    assert_eq!(corpus.train.len() + corpus.test.len(), 20);
}

#[test]
fn exit_codes_distinguish_input_and_numerical_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(d, &["train", "--corpus", "nowhere"]),
        1,
        "missing seed"
    );
    assert_eq!(
        code(
            d,
            &["--seed", "1", "train", "--corpus", "nowhere", "--out", "o"]
        ),
        1
    );
    assert_eq!(code(d, &["--seed", "1", "frobnicate"]), 1);
    assert_eq!(code(d, &["--help"]), 0);

    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let input = sample();
    ok(
        d,
        &[
            "--config",
            "run.toml",
            "preprocess",
            "--input",
            input.to_str().unwrap(),
            "--out",
            "corpus",
        ],
    );
    let k = ddtm::corpus::read_corpus(&d.join("corpus"))
        .unwrap()
        .vocab_size();
    let mut p = ModelParams::zeros(k, HiddenConfig::from_total_bits(4, Variant::Ddtm).unwrap());
    p.u[(0, 0)] = f64::NAN;
    std::fs::write(d.join("nan.ddtm"), encode_checkpoint(&p)).unwrap();
    let eval = [
        "--config",
        "run.toml",
        "eval",
        "--corpus",
        "corpus",
        "--out",
        "e",
        "--checkpoint",
    ];
    assert_eq!(code(d, &[&eval[..], &["nan.ddtm"]].concat()), 2);

    let mut bytes = encode_checkpoint(&ModelParams::zeros(
        k,
        HiddenConfig::from_total_bits(4, Variant::Ddtm).unwrap(),
    ));
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(d.join("bad.ddtm"), bytes).unwrap();
    let out = ddtm(d, &[&eval[..], &["bad.ddtm"]].concat());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));

    let wrong = ModelParams::zeros(
        k + 1,
        HiddenConfig::from_total_bits(4, Variant::Ddtm).unwrap(),
    );
    std::fs::write(d.join("wrong.ddtm"), encode_checkpoint(&wrong)).unwrap();
    assert_eq!(code(d, &[&eval[..], &["wrong.ddtm"]].concat()), 1);
}

#[test]
fn worker_count_does_not_change_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), CONFIG).unwrap();
    let input = sample();
    ok(
        d,
        &[
            "--config",
            "run.toml",
            "preprocess",
            "--input",
            input.to_str().unwrap(),
            "--out",
            "corpus",
        ],
    );
    ok(
        d,
        &[
            "--config", "run.toml", "train", "--corpus", "corpus", "--out", "w1",
        ],
    );
    ok(
        d,
        &[
            "--config",
            "run.toml",
            "--workers",
            "3",
            "train",
            "--corpus",
            "corpus",
            "--out",
            "w3",
        ],
    );
    assert_eq!(
        std::fs::read(d.join("w1/model.ddtm")).unwrap(),
        std::fs::read(d.join("w3/model.ddtm")).unwrap()
    );
}
