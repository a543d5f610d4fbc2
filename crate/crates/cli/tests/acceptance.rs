//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. A criterion also fails if it overruns its
//! time limit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[path = "../../scraper/tests/support/mod.rs"]
mod fixture_server;

use std::collections::HashSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveTime, TimeZone, Utc};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcontrol_core::article::{Article, RawArticle, RetrievedVia};
use tcontrol_core::corpus::{
    load_corpus, preprocess, save_corpus, split_corpus, Corpus, LabeledExample, Preprocessed, Split, MAX_BODY_CHARS,
};
use tcontrol_core::embed::{train_embed, EmbedTrainConfig};
use tcontrol_core::eval::{evaluate, evaluate_predictions, load_predictions};
use tcontrol_core::labels::{encode_labels, parse_label_string, render_label_string, Label, LabelSet, LABEL_NAMES};
use tcontrol_core::lm::{builtin, cross_entropy, resolve_model, CausalLm, LmConfig};
use tcontrol_core::prompt::{
    collate, collate_examples, dataset_loss, format_input, initial_prompt, sequence_loss, train_prompt,
    train_prompt_with_model, PromptTuneConfig, PromptedModel, DEFAULT_INIT_TEXT, IGNORE_INDEX,
};
use tcontrol_core::synthetic::{separable_corpus, separable_examples};
use tcontrol_core::EmbedClassifier;
use tcontrol_scraper::{
    fetch_article, filter_by_keywords, lookup_snapshot, nearest_capture, parse_availability, FetchConfig, ScrapeError,
    Source,
};

type Check = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Check);

fn cases(n: u32) -> PropConfig {
    PropConfig {
        cases: n,
        failure_persistence: None,
        ..PropConfig::default()
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "codec exhaustiveness", Duration::from_secs(1), c1_codec),
        (2, "evaluator fixture G*", Duration::from_secs(1), c2_g_star),
        (
            3,
            "evaluator brute-force equivalence",
            Duration::from_secs(5),
            c3_brute_force,
        ),
        (4, "mask/pad unit checks", Duration::from_secs(120), c4_mask_pad),
        (5, "frozen base", Duration::from_secs(600), c5_frozen_base),
        (
            6,
            "prompt-tuning learnability",
            Duration::from_secs(600),
            c6_learnability,
        ),
        (7, "embed classifier smoke", Duration::from_secs(300), c7_embed),
        (8, "corpus properties", Duration::from_secs(10), c8_corpus),
        (9, "scraper fixtures", Duration::from_secs(10), c9_scraper),
    ];
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        if filter.is_some_and(|k| k != n) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(d) if elapsed > limit => Err(format!("{d}; but took {elapsed:.2?}, limit {limit:?}")),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] criterion {n}: {name}: {detail} ({elapsed:.2?}, limit {limit:?})");
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

fn c1_codec() -> Check {
    let mut n = 0;
    for x in LabelSet::all_sets() {
        let text = render_label_string(&x);
        let parsed = parse_label_string(&text);
        ensure!(
            parsed.labels == x && parsed.unknown_tokens.is_empty(),
            "{text:?} parsed as {parsed:?}"
        );
        let named: HashSet<&str> = text.split(", ").filter(|s| !s.is_empty()).collect();
        let bits = encode_labels(&x);
        for (i, name) in LABEL_NAMES.iter().enumerate() {
            ensure!(
                (bits[i] == 1) == named.contains(name),
                "encode/render disagree on {name} for {text:?}"
            );
        }
        n += 1;
    }
    ensure!(n == 32, "enumerated {n} label sets");
    Ok("32/32 label sets round-trip; encode agrees with render".into())
}

/// Count correct decisions straight from the JSON lines, without the
/// corpus or eval modules.
fn naive_recount(gold: &Path, pred: &Path) -> (usize, usize) {
    let rows = |p: &Path| -> Vec<serde_json::Value> {
        fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    };
    let preds = rows(pred);
    let mut correct = 0;
    let mut total = 0;
    for g in rows(gold)
        .iter()
        .filter(|g| g.get("split").is_some_and(|s| s == "eval"))
    {
        let p = preds
            .iter()
            .find(|p| p["id"] == g["id"])
            .expect("prediction for every gold id");
        for name in LABEL_NAMES {
            total += 1;
            if g["labels"][name] == p["labels"][name] {
                correct += 1;
            }
        }
    }
    (correct, total)
}

fn c2_g_star() -> Check {
    let dir = root().join("fixtures/g_star");
    let gold = load_corpus(&dir.join("gold.jsonl")).map_err(|e| e.to_string())?;
    ensure!(gold.eval().count() == 5, "G* must hold 5 eval articles");
    let constant = load_predictions(&dir.join("pred_constant.jsonl")).map_err(|e| e.to_string())?;
    let want = LabelSet::from_labels([Label::Military, Label::Location]);
    ensure!(
        constant.iter().all(|p| p.labels == want),
        "constant file is not {{t_mil, t_loc}}"
    );
    let r = evaluate_predictions(&gold, &constant).map_err(|e| e.to_string())?;
    ensure!(
        (r.correct_decisions, r.total_decisions) == (10, 25),
        "constant predictor: {}/{}",
        r.correct_decisions,
        r.total_decisions
    );
    ensure!(r.mean_accuracy == 0.4, "mean {}", r.mean_accuracy);
    let recount = naive_recount(&dir.join("gold.jsonl"), &dir.join("pred_constant.jsonl"));
    ensure!(recount == (10, 25), "brute-force recount {recount:?}");

    let oracle = load_predictions(&dir.join("pred_oracle.jsonl")).map_err(|e| e.to_string())?;
    let o = evaluate_predictions(&gold, &oracle).map_err(|e| e.to_string())?;
    ensure!(o.mean_accuracy == 1.0, "oracle mean {}", o.mean_accuracy);
    ensure!(
        naive_recount(&dir.join("gold.jsonl"), &dir.join("pred_oracle.jsonl")) == (25, 25),
        "oracle recount"
    );
    Ok("constant {t_mil, t_loc} = 10/25 = 0.40 (recount 10/25); oracle = 25/25".into())
}

fn c3_brute_force() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..200 {
        let n = rng.random_range(1..=8);
        let gold: Vec<LabelSet> = (0..n).map(|_| LabelSet::from_mask(rng.random_range(0..32))).collect();
        let pred: Vec<LabelSet> = (0..n).map(|_| LabelSet::from_mask(rng.random_range(0..32))).collect();
        let r = evaluate(&gold, &pred).map_err(|e| e.to_string())?;
        let mut all = 0;
        for (j, l) in Label::ALL.into_iter().enumerate() {
            let bit = |s: &LabelSet| (s.to_mask() >> j) & 1;
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for i in 0..n {
                match (bit(&gold[i]), bit(&pred[i])) {
                    (1, 1) => tp += 1,
                    (0, 1) => fp += 1,
                    (0, 0) => tn += 1,
                    _ => fn_ += 1,
                }
            }
            let c = r.per_label[j].confusion;
            ensure!(
                (c.tp, c.fp, c.tn, c.fn_) == (tp, fp, tn, fn_),
                "case {case}: confusion for {l} differs"
            );
            ensure!(
                r.accuracy(l) == (tp + tn) as f64 / n as f64,
                "case {case}: accuracy for {l}"
            );
            all += tp + tn;
        }
        ensure!(
            r.correct_decisions == all && r.total_decisions == 5 * n,
            "case {case}: totals"
        );
        ensure!(r.mean_accuracy == all as f64 / (5 * n) as f64, "case {case}: mean");
    }
    Ok("200/200 random instances match the naive count exactly".into())
}

fn tiny_lm() -> CausalLm<f64> {
    let tok = builtin::tokenizer();
    let config = LmConfig {
        vocab_size: tok.vocab_size(),
        hidden: 16,
        layers: 1,
        heads: 2,
        mlp_hidden: 32,
        max_positions: 320,
        layer_norm_eps: 1e-5,
    };
    CausalLm::init(config, tok, &mut ChaCha8Rng::seed_from_u64(5))
}

fn c4_mask_pad() -> Check {
    let model = tiny_lm();
    let tok = &model.tokenizer;
    let vocab = model.config.vocab_size;
    let prompt = initial_prompt(&model, DEFAULT_INIT_TEXT, 8).map_err(|e| e.to_string())?;
    let n_prefix = 8;
    let max_len = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let body_words = rng.random_range(1..=300);
        let label_names = rng.random_range(1..=10);
        let body: Vec<&str> = (0..body_words)
            .map(|_| builtin::FILLER[rng.random_range(0..builtin::FILLER.len())])
            .collect();
        let target: Vec<&str> = (0..label_names).map(|_| LABEL_NAMES[rng.random_range(0..5)]).collect();
        let target_tokens = 2 * label_names; // names, separating commas, end-of-sequence
        let b = collate(tok, &format_input(&body.join(" ")), &target.join(", "), max_len).map_err(|e| e.to_string())?;

        let content = (2 + body_words + 2 + target_tokens).min(max_len);
        let pad = max_len - content;
        ensure!(b.max_len() == max_len, "case {case}: length {}", b.max_len());
        ensure!(
            b.attention_mask[..pad].iter().all(|&m| m == 0),
            "case {case}: mask inside padding"
        );
        ensure!(
            b.attention_mask[pad..].iter().all(|&m| m == 1),
            "case {case}: mask inside content"
        );
        ensure!(
            b.input_ids[..pad].iter().all(|&i| i == tok.pad_id()),
            "case {case}: pad ids"
        );
        let ignored = b.labels.iter().filter(|&&l| l == IGNORE_INDEX).count();
        ensure!(
            ignored == max_len - target_tokens,
            "case {case}: {ignored} ignored positions"
        );
        ensure!(
            b.labels[max_len - target_tokens..].iter().all(|&l| l != IGNORE_INDEX),
            "case {case}: label span not at the end"
        );
        ensure!(
            *b.labels.last().unwrap() == i64::from(tok.eos_id()),
            "case {case}: no end-of-sequence target"
        );

        // independent loss: mean -log p(target) over the label span
        let ids = b.content_ids();
        let labels = b.content_labels();
        let fwd = model.forward(&prompt, &ids);
        let mut sum = 0.0;
        let mut count = 0;
        for (r, &l) in labels.iter().enumerate() {
            if l == IGNORE_INDEX {
                continue;
            }
            let row = &fwd.logits[(n_prefix + r - 1) * vocab..(n_prefix + r) * vocab];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            sum += lse - row[l as usize];
            count += 1;
        }
        let reference = sum / count as f64;
        let loss = sequence_loss(&model, &prompt, &b);
        ensure!(
            (loss - reference).abs() < 1e-9,
            "case {case}: loss {loss} vs reference {reference}"
        );

        // perturb the ignored positions: pad ids, and logits whose target is ignored
        let mut perturbed = b.clone();
        for i in 0..pad {
            perturbed.input_ids[i] = rng.random_range(0..vocab as u32);
        }
        worst = worst.max((sequence_loss(&model, &prompt, &perturbed) - loss).abs());
        let mut targets: Vec<Option<u32>> = vec![None; n_prefix + ids.len()];
        for (r, &l) in labels.iter().enumerate() {
            if l != IGNORE_INDEX {
                targets[n_prefix + r - 1] = Some(l as u32);
            }
        }
        let mut logits = fwd.logits.clone();
        for (pos, t) in targets.iter().enumerate() {
            if t.is_none() {
                for x in &mut logits[pos * vocab..(pos + 1) * vocab] {
                    *x += rng.random_range(-5.0..5.0);
                }
            }
        }
        let (clean, _) = cross_entropy(&fwd.logits, vocab, &targets);
        let (noisy, _) = cross_entropy(&logits, vocab, &targets);
        worst = worst.max((clean - noisy).abs());
        ensure!(
            worst <= 1e-7,
            "case {case}: perturbing ignored positions moved the loss by {worst:e}"
        );
    }
    Ok(format!(
        "50/50 random length pairs match the pad/mask arithmetic; max loss change {worst:e}"
    ))
}

fn c5_frozen_base() -> Check {
    let corpus = separable_corpus(16, 0);
    let cfg = PromptTuneConfig::default();
    let outcome = train_prompt::<f32>(&corpus, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        outcome.base_checksum_before == outcome.base_checksum_after,
        "checksum changed: {} -> {}",
        outcome.base_checksum_before,
        outcome.base_checksum_after
    );
    let fresh = resolve_model::<f32>(&cfg.model_id).map_err(|e| e.to_string())?;
    ensure!(
        fresh.checksum() == outcome.state.base_checksum,
        "stored checksum differs from a fresh load"
    );
    let before = fresh.params().to_vec();
    let again = train_prompt_with_model(&fresh, &separable_examples(16, 0), &cfg).map_err(|e| e.to_string())?;
    ensure!(before == fresh.params(), "base parameters changed");
    let expected = cfg.num_virtual_tokens * fresh.config.hidden;
    let state = &outcome.state;
    ensure!(
        state.trainable_params() == expected && state.embeddings.len() == expected,
        "trainable {} != {} x {}",
        state.trainable_params(),
        cfg.num_virtual_tokens,
        fresh.config.hidden
    );
    ensure!(
        again.state.embeddings == state.embeddings,
        "same seed, different prompt"
    );
    Ok(format!(
        "{} steps; checksum {}... unchanged; trainable = {} x {} = {expected}",
        outcome.step_losses.len(),
        &state.base_checksum[..12],
        cfg.num_virtual_tokens,
        fresh.config.hidden
    ))
}

fn c6_learnability() -> Check {
    let model = resolve_model::<f32>(builtin::TINY_INSTRUCT).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for seed in 0..3 {
        let train = separable_examples(16, seed);
        let cfg = PromptTuneConfig {
            max_steps: Some(30),
            seed,
            ..PromptTuneConfig::default()
        };
        let batches = collate_examples(&model, &train, cfg.max_input_tokens).map_err(|e| e.to_string())?;
        let p0 = initial_prompt(&model, &cfg.init_text, cfg.num_virtual_tokens).map_err(|e| e.to_string())?;
        let before = dataset_loss(&model, &p0, &batches);
        let out = train_prompt_with_model(&model, &train, &cfg).map_err(|e| e.to_string())?;
        ensure!(out.step_losses.len() == 30, "{} steps", out.step_losses.len());
        let after = dataset_loss(&model, &out.state.embeddings, &batches);
        let pm = PromptedModel::new(model.clone(), out.state).map_err(|e| e.to_string())?;
        let exact = train
            .iter()
            .filter(|e| pm.generate_labels(&e.article.body).raw == render_label_string(&e.labels))
            .count();
        ensure!(after <= 0.5 * before, "seed {seed}: loss {before:.3} -> {after:.3}");
        ensure!(
            exact * 5 >= train.len() * 4,
            "seed {seed}: {exact}/16 exact label strings"
        );
        summary.push(format!("seed {seed}: loss {before:.2} -> {after:.3}, exact {exact}/16"));
    }
    Ok(summary.join("; "))
}

fn c7_embed() -> Check {
    let corpus = separable_corpus(16, 0);
    let model: EmbedClassifier = train_embed(&corpus, &EmbedTrainConfig::default()).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for l in [Label::Military, Label::Location] {
        let right = corpus
            .train()
            .filter(|e| model.predict(&e.article.body).get(l) == e.labels.get(l))
            .count();
        let n = corpus.train().count();
        ensure!(right * 10 >= n * 9, "{l}: train accuracy {right}/{n}");
        parts.push(format!("{l} {right}/{n}"));
    }
    for l in [Label::MilitaryCasualties, Label::CivilianCasualties, Label::IsisVictory] {
        ensure!(model.heads[l.index()].is_constant(), "{l} head is not constant");
        for body in ["battle in the city", "quiet market day", ""] {
            ensure!(!model.predict(body).get(l), "{l} constant head predicted true");
        }
    }
    parts.push("t_milcas/t_civcas/t_isis_vic constant false".into());
    Ok(parts.join(", "))
}

fn c8_corpus() -> Check {
    let raw = |url: String, body: String| RawArticle {
        url,
        title: "t".into(),
        body,
        published_at: None,
        retrieved_via: RetrievedVia::Live,
        fetched_at: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
    };
    let mut runner = TestRunner::new(cases(256));
    runner
        .run(&"[a-z\u{e9}\u{4e2d} \\t\\n]{0,1200}", |body| {
            match preprocess(&raw("http://x.test/".into(), body.clone())) {
                Preprocessed::Kept(a) => {
                    prop_assert!(a.body.chars().count() <= MAX_BODY_CHARS);
                    let again = preprocess(&raw(a.url.clone(), a.body.clone())).kept().unwrap();
                    prop_assert_eq!(again.body, a.body);
                }
                Preprocessed::Dropped(_) => prop_assert!(body.trim().is_empty()),
            }
            Ok(())
        })
        .map_err(|e| format!("truncation/idempotence/drop-empty: {e}"))?;

    let mut runner = TestRunner::new(cases(128));
    runner
        .run(&(2usize..30, any::<u64>(), 0.0f64..1.0), |(n, seed, frac)| {
            let k = 1 + ((n - 2) as f64 * frac) as usize;
            let pairs: Vec<(Article, LabelSet)> = (0..n)
                .map(|i| {
                    let a = preprocess(&raw(format!("http://x.test/{i}"), format!("b {i}")))
                        .kept()
                        .unwrap();
                    (a, LabelSet::from_mask((i * 5 % 32) as u8))
                })
                .collect();
            let a = split_corpus(pairs.clone(), k, seed).unwrap();
            prop_assert_eq!(&a, &split_corpus(pairs, k, seed).unwrap());
            let train: HashSet<_> = a.train().map(|e| &e.article.id).collect();
            let eval: HashSet<_> = a.eval().map(|e| &e.article.id).collect();
            prop_assert!(train.is_disjoint(&eval));
            prop_assert_eq!((train.len(), train.len() + eval.len()), (k, n));
            Ok(())
        })
        .map_err(|e| format!("split: {e}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("c.jsonl");
    let mut runner = TestRunner::new(cases(64));
    runner
        .run(
            &prop::collection::vec(("\\PC{1,600}", 0u8..32, any::<bool>()), 1..10),
            |rows| {
                let examples: Vec<LabeledExample> = rows
                    .into_iter()
                    .enumerate()
                    .filter_map(|(i, (body, mask, train))| {
                        preprocess(&raw(format!("https://e.test/{i}"), body))
                            .kept()
                            .map(|article| LabeledExample {
                                article,
                                labels: LabelSet::from_mask(mask),
                                split: if train { Split::Train } else { Split::Eval },
                            })
                    })
                    .collect();
                let corpus = Corpus::new(examples).unwrap();
                save_corpus(&corpus, &path).unwrap();
                prop_assert_eq!(load_corpus(&path).unwrap(), corpus);
                Ok(())
            },
        )
        .map_err(|e| format!("round trip: {e}"))?;
    Ok("256 truncation/idempotence/drop-empty, 128 split, 64 round-trip cases".into())
}

fn c9_scraper() -> Check {
    use fixture_server::{fixture, Reply, Server};
    const URL: &str = "http://www.aljazeera.com/news/2016/03/syrian-army-advances-palmyra.html";
    let server = Server::start(vec![
        ("/available", Reply::json(fixture("availability_closest.json"))),
        ("/empty", Reply::json(fixture("availability_empty.json"))),
        (
            &*format!("/web/20160317120000/{URL}"),
            Reply::html(fixture("article_snapshot.html")),
        ),
        ("/hang", Reply::Hang),
    ]);
    ensure!(
        server.base.starts_with("http://127.0.0.1:"),
        "fixture server is not local"
    );
    let cfg = FetchConfig {
        request_timeout: 0.5,
        retry_count: 1,
        retry_backoff: 0.0,
        availability_endpoint: server.url("/available"),
        archive_base: server.url("/web"),
        ..FetchConfig::default()
    };
    let day = NaiveDate::from_ymd_opt(2016, 3, 17).unwrap();

    // availability parsing and lookup
    let snap = lookup_snapshot(URL, day, &cfg).map_err(|e| e.to_string())?;
    ensure!(
        snap.archive_timestamp == "20160317120000",
        "timestamp {}",
        snap.archive_timestamp
    );
    let empty = FetchConfig {
        availability_endpoint: server.url("/empty"),
        ..cfg.clone()
    };
    ensure!(
        matches!(
            lookup_snapshot(URL, day, &empty),
            Err(ScrapeError::SnapshotNotFound { .. })
        ),
        "empty availability is not SnapshotNotFound"
    );

    // nearest-snapshot selection against a brute-force minimum
    let captures = parse_availability(&fixture("cdx_captures.json")).map_err(|e| e.to_string())?;
    for d in 1..=31 {
        let target = NaiveDate::from_ymd_opt(2016, 3, d)
            .unwrap()
            .and_time(NaiveTime::from_hms_opt(12, 0, 0).unwrap())
            .and_utc();
        let best = nearest_capture(&captures, target).ok_or("no capture")?;
        let dist = |t: chrono::DateTime<Utc>| (t - target).num_seconds().abs();
        let min = captures.iter().map(|c| dist(c.captured_at())).min().unwrap();
        ensure!(dist(best.captured_at()) == min, "day {d}: not nearest");
    }

    // fetched article, then keyword filter soundness/completeness by brute force
    let article = fetch_article(&Source::Archive(snap), &cfg).map_err(|e| e.to_string())?;
    ensure!(
        article.title == "Syrian army advances towards ISIL-held Palmyra",
        "title {:?}",
        article.title
    );
    ensure!(!article.body.contains("Wayback"), "archive toolbar text in body");
    let mk = |t: &str, b: &str| RawArticle {
        title: t.into(),
        body: b.into(),
        ..article.clone()
    };
    let pool = vec![
        article.clone(),
        mk("Battle for Mosul", "Iraqi forces advance."),
        mk("Weather", "sunny"),
        mk("Markets", "Prices in Raqqa rose."),
        mk("Aid", "Convoy reached RAQQA."),
    ];
    for keywords in [vec!["mosul"], vec!["Raqqa"], vec!["palmyra", "SUNNY"], vec!["zzz"]] {
        let kept = filter_by_keywords(pool.clone(), &keywords).map_err(|e| e.to_string())?;
        let hit = |a: &RawArticle| {
            keywords.iter().any(|k| {
                let k = k.to_lowercase();
                a.title.to_lowercase().contains(&k) || a.body.to_lowercase().contains(&k)
            })
        };
        let expected: Vec<_> = pool.iter().filter(|a| hit(a)).cloned().collect();
        ensure!(kept == expected, "filter {keywords:?} kept {} articles", kept.len());
    }
    let none: [&str; 0] = [];
    ensure!(
        matches!(filter_by_keywords(pool, &none), Err(ScrapeError::EmptyKeywordSet)),
        "empty keyword set accepted"
    );

    // error mapping
    match fetch_article(&Source::Live(server.url("/missing")), &cfg) {
        Err(ScrapeError::HttpError { status: 404, .. }) => {}
        other => return Err(format!("404 mapped to {other:?}")),
    }
    let start = Instant::now();
    let r = fetch_article(&Source::Live(server.url("/hang")), &cfg);
    let took = start.elapsed();
    ensure!(
        matches!(r, Err(ScrapeError::FetchTimeout { attempts: 2, .. })),
        "hang mapped to {r:?}"
    );
    let bound = cfg.timeout() * (cfg.retry_count + 1) + Duration::from_millis(500);
    ensure!(took <= bound, "timeout took {took:?}, bound {bound:?}");
    Ok(format!(
        "lookup, empty lookup, nearest over 31 days, 4 keyword sets, 404 and timeout ({took:.2?} <= {bound:?}) all local"
    ))
}
