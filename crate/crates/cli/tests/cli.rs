//! End-to-end tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gec-rl"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A small fixed corpus: half errorful (one character doubled), half
/// already correct.
fn write_corpus(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    let mut text = String::new();
    for i in 0..n {
        let clean = format!("plain sentence number {i}");
        let source = if i % 2 == 0 {
            format!("plaain sentence number {i}")
        } else {
            clean.clone()
        };
        text.push_str(
            &serde_json::json!({
                "id": format!("p{i:03}"),
                "source": source,
                "references": [clean],
            })
            .to_string(),
        );
        text.push('\n');
    }
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn score_prints_percentages_then_json() {
    let dir = tempfile::tempdir().unwrap();
    // Two sentences: one perfectly fixed, one over-corrected.
    let corpus = dir.path().join("c.jsonl");
    fs::write(
        &corpus,
        concat!(
            "{\"id\":\"1\",\"source\":\"teh cat\",\"references\":[\"the cat\"]}\n",
            "{\"id\":\"2\",\"source\":\"ab\",\"references\":[\"ab\"]}\n",
        ),
    )
    .unwrap();
    let hyp = dir.path().join("h.txt");
    fs::write(&hyp, "the cat\nax\n").unwrap();

    let out = run(&[
        "score",
        "--corpus",
        corpus.to_str().unwrap(),
        "--hyp",
        hyp.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    // tp=1 fp=1 fn=0 → P=0.5, R=1, F0.5=0.555…
    assert_eq!(lines.next().unwrap(), "50.00\t100.00\t55.56");
    let summary: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(summary["tp"], 1);
    assert_eq!(summary["fp"], 1);
    assert_eq!(summary["fn"], 0);
    assert_eq!(summary["p"], 0.5);
    assert_eq!(summary["r"], 1.0);
}

#[test]
fn score_rejects_misaligned_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 4);
    let hyp = dir.path().join("h.txt");
    fs::write(&hyp, "only one line\n").unwrap();
    let out = run(&[
        "score",
        "--corpus",
        corpus.to_str().unwrap(),
        "--hyp",
        hyp.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("1 lines for 4"));
}

#[test]
fn reward_emits_breakdown_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    fs::write(
        &corpus,
        "{\"id\":\"1\",\"source\":\"teh cat\",\"references\":[\"the cat\"]}\n",
    )
    .unwrap();
    let outputs = dir.path().join("o.txt");
    fs::write(&outputs, "<answer>the cat</answer>\n").unwrap();

    let out = run(&[
        "reward",
        "--corpus",
        corpus.to_str().unwrap(),
        "--outputs",
        outputs.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let row: serde_json::Value = serde_json::from_str(stdout(&out).lines().next().unwrap()).unwrap();
    assert_eq!(row["case"], "FixCorrect");
    assert_eq!(row["r_rule"], 0.25);
    assert_eq!(row["r_c"], 2.1);
    assert_eq!(row["total"], 2.35);
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn train_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 6);
    let config = write_config(
        dir.path(),
        r#"{"train": {"max_steps": 6, "batch_size": 4}}"#,
    );

    let run_train = |out_dir: &Path| {
        let out = run(&[
            "train",
            "--corpus",
            corpus.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "11",
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--quiet",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_train(&a);
    run_train(&b);

    let metrics_a = fs::read(a.join("metrics.csv")).unwrap();
    let metrics_b = fs::read(b.join("metrics.csv")).unwrap();
    assert_eq!(metrics_a, metrics_b);
    assert_eq!(
        fs::read(a.join("checkpoint.json")).unwrap(),
        fs::read(b.join("checkpoint.json")).unwrap()
    );
    let metrics_text = String::from_utf8(metrics_a).unwrap();
    assert_eq!(metrics_text.lines().count(), 7); // header + 6 steps
    assert!(metrics_text.starts_with("step,mean_reward,mean_resp_len,mean_entropy\n"));
}

#[test]
fn vote_consumes_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 6);
    let config = write_config(
        dir.path(),
        r#"{"train": {"max_steps": 4, "batch_size": 4}}"#,
    );
    let out_dir = dir.path().join("run");
    let out = run(&[
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(&[
        "vote",
        "--corpus",
        corpus.to_str().unwrap(),
        "--checkpoint",
        out_dir.join("checkpoint.json").to_str().unwrap(),
        "--n",
        "1,4",
        "--seed",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("n,p,r,f05\n"), "{text}");
    assert_eq!(text.lines().count(), 3);
    assert_eq!(
        fs::read_to_string(out_dir.join("vote.csv")).unwrap(),
        text
    );
}

#[test]
fn pipeline_stages_write_sft_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 6);
    let out_dir = dir.path().join("pipe");

    let out = run(&[
        "pipeline",
        "stage1",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stage1 = fs::read_to_string(out_dir.join("sft.jsonl")).unwrap();
    assert_eq!(stage1.lines().count(), 6);
    let first: serde_json::Value = serde_json::from_str(stage1.lines().next().unwrap()).unwrap();
    assert_eq!(first["id"], "p000");
    assert_eq!(first["pass"], 1);

    // Always-accepting judge keeps everything on the first pass.
    let config = write_config(dir.path(), r#"{"judge": {"accept_prob": 1.0}}"#);
    let sft2 = out_dir.join("stage2.jsonl");
    let out = run(&[
        "pipeline",
        "stage2",
        "--corpus",
        corpus.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        sft2.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("6 accepted / 6"));
    let stage2 = fs::read_to_string(&sft2).unwrap();
    assert_eq!(stage2.lines().count(), 6);
    assert!(stage2.lines().all(|l| l.contains("\"pass\":1")));
}

#[test]
fn report_renders_curves_from_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let metrics = dir.path().join("metrics.csv");
    fs::write(
        &metrics,
        "step,mean_reward,mean_resp_len,mean_entropy\n0,1.0,30,1.6\n1,1.5,29,1.4\n2,2.0,28,1.1\n",
    )
    .unwrap();
    let out_dir = dir.path().join("report");
    let out = run(&[
        "report",
        "--metrics",
        metrics.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["reward.svg", "response_length.svg", "entropy.svg", "summary.json"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }

    // Schema mismatch is a runtime failure naming the missing columns.
    fs::write(&metrics, "step,mean_reward\n0,1.0\n").unwrap();
    let out = run(&[
        "report",
        "--metrics",
        metrics.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("mean_resp_len") && err.contains("mean_entropy"), "{err}");
}

#[test]
fn demo_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"demo": {"pairs": 16, "max_steps": 12, "n_list": [1, 2]}}"#,
    );
    let demo = |out_dir: &Path| {
        let out = run(&[
            "demo",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "99",
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--quiet",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    demo(&a);
    demo(&b);

    for name in ["metrics.csv", "vote.csv", "checkpoint.json", "manifest.json", "corpus.jsonl"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pairs"], 16);
    assert_eq!(manifest["steps"], 12);
    let report = manifest["report"].as_array().unwrap();
    assert!(report.iter().any(|f| f == "reward.svg"));
    for name in manifest["report"].as_array().unwrap() {
        assert!(a.join(name.as_str().unwrap()).exists());
    }
}

#[test]
fn config_errors_exit_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"not_a_key": true}"#);
    let out_dir = dir.path().join("never");
    let out = run(&[
        "demo",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not_a_key"));
    assert!(!out_dir.exists(), "config error must not write artifacts");

    // Invalid value, known key: still a config error.
    let config = write_config(dir.path(), r#"{"train": {"eps_low": 1.5}}"#);
    let out = run(&["demo", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Missing required flag: clap's usage error is also 2.
    let out = run(&["score"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quiet_silences_informational_output() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 4);
    let config = write_config(
        dir.path(),
        r#"{"train": {"max_steps": 2, "batch_size": 4}}"#,
    );
    let out = run(&[
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().join("q").to_str().unwrap(),
        "--quiet",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).is_empty());
}

#[test]
fn help_covers_documented_surface() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for needle in [
        "score", "reward", "train", "vote", "pipeline", "report", "demo",
        "--config", "--seed", "--out-dir", "--quiet",
    ] {
        assert!(text.contains(needle), "--help missing {needle}");
    }
}
