mod support;

use std::fs;

use serde_json::Value;
use tcontrol_core::corpus::load_corpus;
use tcontrol_core::eval::{load_predictions, read_report};

use support::{g_star, p, snapshot_dir, tcontrol, write_synthetic_inputs};

#[test]
fn evaluate_g_star_constant_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let r = tcontrol(&[
        "evaluate",
        "--gold",
        p(&g_star("gold.jsonl")),
        "--pred",
        p(&g_star("pred_constant.jsonl")),
        "--out",
        p(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("10/25"), "{}", r.stdout);
    let report = read_report(&out).unwrap();
    assert_eq!((report.correct_decisions, report.total_decisions), (10, 25));

    let txt = dir.path().join("report.txt");
    let r = tcontrol(&[
        "evaluate",
        "--gold",
        p(&g_star("gold.jsonl")),
        "--pred",
        p(&g_star("pred_oracle.jsonl")),
        "--out",
        p(&txt),
        "--format",
        "text",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let text = fs::read_to_string(&txt).unwrap();
    assert!(text.contains("25/25"), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    let r = tcontrol(&["train-prompt"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("--corpus"), "{}", r.stderr);
    assert!(r.stderr.contains("Usage"), "{}", r.stderr);

    let r = tcontrol(&[
        "predict",
        "--model",
        "m",
        "--prompt-state",
        "s",
        "--in",
        "a",
        "--out",
        "b",
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("cannot be used with"), "{}", r.stderr);

    let r = tcontrol(&["predict", "--in", "a", "--out", "b"]);
    assert_eq!(r.code, 2, "{}", r.stderr);

    let gold = g_star("gold.jsonl");
    let pred = g_star("pred_oracle.jsonl");
    let base = ["evaluate", "--gold", p(&gold), "--pred", p(&pred), "--out", "/dev/null"];
    let r = tcontrol(&[&base[..], &["--format", "xml"]].concat());
    assert_eq!(r.code, 2, "{}", r.stderr);
    let r = tcontrol(&[&base[..], &["--log-level", "loud"]].concat());
    assert_eq!(r.code, 2, "{}", r.stderr);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[prompt]\nlearning_rat = 0.1\n").unwrap();
    let r = tcontrol(&[&base[..], &["--config", p(&cfg)]].concat());
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("learning_rat"), "{}", r.stderr);

    let r = tcontrol(&["bogus"]);
    assert_eq!(r.code, 2);
    assert_eq!(tcontrol(&["--help"]).code, 0);
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let r = tcontrol(&[
        "evaluate",
        "--gold",
        p(&dir.path().join("missing.jsonl")),
        "--pred",
        p(&g_star("pred_oracle.jsonl")),
        "--out",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("missing.jsonl"), "{}", r.stderr);

    // predictions for only some gold articles
    let partial = dir.path().join("partial.jsonl");
    let first = fs::read_to_string(g_star("pred_oracle.jsonl"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    fs::write(&partial, first + "\n").unwrap();
    let r = tcontrol(&[
        "evaluate",
        "--gold",
        p(&g_star("gold.jsonl")),
        "--pred",
        p(&partial),
        "--out",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("no prediction"), "{}", r.stderr);
}

/// build-corpus, train-embed, predict, evaluate; twice, byte-identical.
#[test]
fn embed_flow_is_reproducible() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let d = dir.path();
            let (raw, labels) = write_synthetic_inputs(d, 20, 5);
            let corpus = d.join("corpus.jsonl");
            let r = tcontrol(&[
                "build-corpus",
                "--in",
                p(&raw),
                "--labels",
                p(&labels),
                "--train-count",
                "16",
                "--seed",
                "3",
                "--out",
                p(&corpus),
            ]);
            assert_eq!(r.code, 0, "{}", r.stderr);
            assert!(r.stderr.contains("seed=3"), "{}", r.stderr);
            let c = load_corpus(&corpus).unwrap();
            assert_eq!((c.train().count(), c.eval().count()), (16, 4));

            let model = d.join("model");
            let r = tcontrol(&["train-embed", "--corpus", p(&corpus), "--out", p(&model), "--seed", "3"]);
            assert_eq!(r.code, 0, "{}", r.stderr);
            assert!(r.stderr.contains("constant heads"), "{}", r.stderr);

            let preds = d.join("preds.jsonl");
            let r = tcontrol(&["predict", "--model", p(&model), "--in", p(&corpus), "--out", p(&preds)]);
            assert_eq!(r.code, 0, "{}", r.stderr);
            assert_eq!(load_predictions(&preds).unwrap().len(), 20);

            let report = d.join("report.json");
            let r = tcontrol(&[
                "evaluate",
                "--gold",
                p(&corpus),
                "--pred",
                p(&preds),
                "--out",
                p(&report),
            ]);
            assert_eq!(r.code, 0, "{}", r.stderr);
            let rep = read_report(&report).unwrap();
            assert_eq!(rep.n_examples, 4);
            // raw.jsonl has no timestamps worth excluding (fixed epoch)
            (snapshot_dir(d), dir)
        })
        .collect();
    assert_eq!(runs[0].0, runs[1].0);
}

#[test]
fn prompt_flow_on_raw_articles() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (raw, labels) = write_synthetic_inputs(d, 20, 9);
    let corpus = d.join("corpus.jsonl");
    assert_eq!(
        tcontrol(&[
            "build-corpus",
            "--in",
            p(&raw),
            "--labels",
            p(&labels),
            "--train-count",
            "16",
            "--out",
            p(&corpus)
        ])
        .code,
        0
    );
    let mut states = Vec::new();
    for name in ["s1", "s2"] {
        let state = d.join(name);
        let r = tcontrol(&[
            "train-prompt",
            "--corpus",
            p(&corpus),
            "--model-id",
            "builtin:tiny-instruct",
            "--max-steps",
            "6",
            "--out",
            p(&state),
        ]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        states.push(snapshot_dir(&state));
    }
    assert_eq!(states[0], states[1]);
    let meta: Value = serde_json::from_slice(&states[0].iter().find(|(n, _)| n == "prompt.json").unwrap().1).unwrap();
    assert_eq!(meta["base_checksum"].as_str().unwrap().len(), 64);

    // predict straight from raw articles (preprocessed on the fly)
    let preds = d.join("preds.jsonl");
    let r = tcontrol(&[
        "predict",
        "--prompt-state",
        p(&d.join("s1")),
        "--in",
        p(&raw),
        "--out",
        p(&preds),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let ps = load_predictions(&preds).unwrap();
    assert_eq!(ps.len(), 20);
    assert!(ps.iter().all(|p| p.raw.is_some()));
}
