use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::NaiveDate;
use log::{info, warn};

use tcontrol_core::corpus::{self, Corpus, Preprocessed};
use tcontrol_core::embed::{self, EmbedTrainConfig};
use tcontrol_core::eval::{self, Prediction, ReportFormat};
use tcontrol_core::prompt::{self, PromptTuneConfig};
use tcontrol_core::{EmbedClassifier, PromptClassifier};
use tcontrol_scraper::{self as scraper, FetchConfig, Source};

use crate::config::RunConfig;
use crate::{Cli, Command, UsageError};

pub(crate) fn dispatch(cli: Cli) -> Result<()> {
    let config_path = match &cli.command {
        Command::Pipeline(a) => a.file.clone().or(cli.config.clone()),
        _ => cli.config.clone(),
    };
    let mut cfg = match &config_path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    let level = cli
        .log_level
        .clone()
        .or(cfg.log_level.clone())
        .unwrap_or_else(|| "info".into());
    let filter: log::LevelFilter = level
        .parse()
        .map_err(|_| UsageError(format!("unknown log level {level:?}")))?;
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .try_init();
    log::set_max_level(filter);
    info!("tcontrol {} seed={}", env!("CARGO_PKG_VERSION"), cfg.seed.unwrap_or(0));

    match cli.command {
        Command::Scrape(a) => {
            if let Some(t) = a.timeout {
                cfg.fetch.request_timeout = t;
            }
            if let Some(u) = a.user_agent {
                cfg.fetch.user_agent = u;
            }
            if let Some(p) = a.parallel {
                cfg.fetch.max_parallel_fetches = p;
            }
            if let Some(r) = a.retries {
                cfg.fetch.retry_count = r;
            }
            let date = a.date.or(cfg.scrape.date.clone());
            let keywords = if a.keywords.is_empty() {
                cfg.scrape.keywords.clone()
            } else {
                a.keywords
            };
            scrape(&cfg.fetch, &a.urls, &a.out, date.as_deref(), &keywords)
        }
        Command::BuildCorpus(a) => build_corpus(
            &a.input,
            &a.labels,
            a.train_count.unwrap_or(cfg.corpus.train_count),
            cfg.corpus.seed,
            &a.out,
        ),
        Command::TrainEmbed(a) => {
            let mut c = cfg.embed.clone();
            if let Some(v) = a.encoder_id {
                c.encoder_id = v;
            }
            if let Some(v) = a.iterations {
                c.iterations_per_epoch = v;
            }
            if let Some(v) = a.epochs {
                c.epochs = v;
            }
            if let Some(v) = a.threshold {
                c.decision_threshold = v;
            }
            c.freeze_encoder |= a.freeze_encoder;
            train_embed(&c, &a.corpus, &a.out)
        }
        Command::TrainPrompt(a) => {
            let mut c = cfg.prompt.clone();
            if let Some(v) = a.model_id {
                c.model_id = v;
            }
            if let Some(v) = a.learning_rate {
                c.learning_rate = v;
            }
            if let Some(v) = a.epochs {
                c.epochs = v;
            }
            if a.max_steps.is_some() {
                c.max_steps = a.max_steps;
            }
            if let Some(v) = a.virtual_tokens {
                c.num_virtual_tokens = v;
            }
            train_prompt(&c, &a.corpus, &a.out)
        }
        Command::Predict(a) => {
            let predictor = match (a.model, a.prompt_state) {
                (Some(m), None) => Predictor::Embed(m),
                (None, Some(s)) => Predictor::Prompt(s),
                _ => unreachable!("clap enforces exactly one predictor"),
            };
            predict(&predictor, &a.input, &a.out)
        }
        Command::Evaluate(a) => {
            let format = parse_format(a.format.as_deref().unwrap_or(&cfg.evaluate.format))?;
            evaluate(&a.gold, &a.pred, &a.out, format)
        }
        Command::Pipeline(_) => {
            if config_path.is_none() {
                return Err(UsageError("pipeline needs a config file (positional argument or --config)".into()).into());
            }
            crate::pipeline::run_pipeline(&cfg)
        }
    }
}

pub(crate) fn parse_format(s: &str) -> Result<ReportFormat> {
    Ok(s.parse::<ReportFormat>().map_err(UsageError)?)
}

fn parse_date(s: &str) -> Result<NaiveDate, UsageError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| UsageError(format!("bad date {s:?} (want YYYY-MM-DD): {e}")))
}

/// Read a URL list: `URL [YYYY-MM-DD]` per line, `#` starts a comment.
pub(crate) fn read_url_list(path: &Path, default_date: Option<NaiveDate>) -> Result<Vec<(String, Option<NaiveDate>)>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open URL list {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let url = parts.next().unwrap().to_string();
        let date = match parts.next() {
            Some(d) => Some(parse_date(d).map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?),
            None => default_date,
        };
        out.push((url, date));
    }
    Ok(out)
}

pub(crate) fn scrape(
    fetch: &FetchConfig,
    urls: &Path,
    out: &Path,
    date: Option<&str>,
    keywords: &[String],
) -> Result<()> {
    fetch.validate().map_err(|e| UsageError(e.to_string()))?;
    let default_date = date.map(parse_date).transpose()?;
    let list = read_url_list(urls, default_date)?;
    let mut sources = Vec::new();
    let mut failures = 0;
    for (url, date) in &list {
        match date {
            None => sources.push(Source::Live(url.clone())),
            Some(d) => match scraper::lookup_snapshot(url, *d, fetch) {
                Ok(snap) => sources.push(Source::Archive(snap)),
                Err(e) => {
                    warn!("{url}: {e}");
                    failures += 1;
                }
            },
        }
    }
    let mut articles = Vec::new();
    for r in scraper::fetch_all(&sources, fetch)? {
        match r {
            Ok(a) => articles.push(a),
            Err(e) => {
                warn!("{e}");
                failures += 1;
            }
        }
    }
    let fetched = articles.len();
    if !keywords.is_empty() {
        articles = scraper::filter_by_keywords(articles, keywords)?;
    }
    corpus::save_raw_articles(&articles, out)?;
    info!(
        "scraped {fetched}/{} URLs ({failures} failed), kept {} after keyword filter, wrote {}",
        list.len(),
        articles.len(),
        out.display()
    );
    if fetched == 0 && !list.is_empty() {
        anyhow::bail!("every URL failed");
    }
    Ok(())
}

pub(crate) fn build_corpus(input: &Path, labels: &Path, train_count: usize, seed: u64, out: &Path) -> Result<()> {
    let raw = corpus::load_raw_articles(input)?;
    let label_map = corpus::load_label_csv(labels)?;
    let (c, report) = corpus::build_corpus(&raw, &label_map, train_count, seed)?;
    for (url, reason) in &report.dropped {
        warn!("dropped {url}: {reason:?}");
    }
    for id in &report.unlabeled {
        warn!("article {id} has no label row; using all-false labels");
    }
    corpus::save_corpus(&c, out)?;
    info!(
        "corpus: {} train, {} eval (seed {seed}) -> {}",
        c.train().count(),
        c.eval().count(),
        out.display()
    );
    Ok(())
}

pub(crate) fn train_embed(config: &EmbedTrainConfig, corpus_path: &Path, out: &Path) -> Result<()> {
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let c = corpus::load_corpus(corpus_path)?;
    let model: EmbedClassifier = embed::train_embed(&c, config)?;
    model.save(out)?;
    let constant: Vec<&str> = tcontrol_core::Label::ALL
        .iter()
        .filter(|l| model.heads[l.index()].is_constant())
        .map(|l| l.name())
        .collect();
    if !constant.is_empty() {
        warn!(
            "constant heads (single class in training data): {}",
            constant.join(", ")
        );
    }
    info!("embed classifier (seed {}) -> {}", config.seed, out.display());
    Ok(())
}

pub(crate) fn train_prompt(config: &PromptTuneConfig, corpus_path: &Path, out: &Path) -> Result<()> {
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let c = corpus::load_corpus(corpus_path)?;
    let outcome = prompt::train_prompt::<f32>(&c, config)?;
    if let (Some(first), Some(last)) = (outcome.step_losses.first(), outcome.step_losses.last()) {
        info!("{} steps, loss {first:.4} -> {last:.4}", outcome.step_losses.len());
    }
    outcome.state.save(out)?;
    info!("prompt state (seed {}) -> {}", config.seed, out.display());
    Ok(())
}

pub(crate) enum Predictor {
    Embed(PathBuf),
    Prompt(PathBuf),
}

/// Articles to label: every example of a corpus file, or preprocessed raw
/// articles (empty bodies skipped).
fn load_inputs(path: &Path) -> Result<Vec<(String, String)>> {
    let first = {
        let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let mut line = String::new();
        BufReader::new(file).read_line(&mut line)?;
        line
    };
    let is_corpus = serde_json::from_str::<serde_json::Value>(&first)
        .ok()
        .is_some_and(|v| v.get("schema_version").is_some());
    if is_corpus {
        let c: Corpus = corpus::load_corpus(path)?;
        return Ok(c.examples.into_iter().map(|e| (e.article.id, e.article.body)).collect());
    }
    let mut out = Vec::new();
    for raw in corpus::load_raw_articles(path)? {
        match corpus::preprocess(&raw) {
            Preprocessed::Kept(a) => out.push((a.id, a.body)),
            Preprocessed::Dropped(reason) => warn!("skipping {}: {reason:?}", raw.url),
        }
    }
    Ok(out)
}

pub(crate) fn predict(predictor: &Predictor, input: &Path, out: &Path) -> Result<()> {
    let inputs = load_inputs(input)?;
    let preds: Vec<Prediction> = match predictor {
        Predictor::Embed(dir) => {
            let model = EmbedClassifier::load(dir)?;
            inputs
                .into_iter()
                .map(|(id, body)| Prediction {
                    id,
                    labels: model.predict(&body),
                    raw: None,
                })
                .collect()
        }
        Predictor::Prompt(dir) => {
            let model = PromptClassifier::load(dir)?;
            inputs
                .into_iter()
                .map(|(id, body)| {
                    let g = model.generate_labels(&body);
                    if !g.unknown_tokens.is_empty() {
                        warn!("{id}: unrecognised label tokens {:?}", g.unknown_tokens);
                    }
                    Prediction {
                        id,
                        labels: g.labels,
                        raw: Some(g.raw),
                    }
                })
                .collect()
        }
    };
    eval::save_predictions(&preds, out)?;
    info!("{} predictions -> {}", preds.len(), out.display());
    Ok(())
}

pub(crate) fn evaluate(gold: &Path, pred: &Path, out: &Path, format: ReportFormat) -> Result<()> {
    let g = corpus::load_corpus(gold)?;
    let p = eval::load_predictions(pred)?;
    let report = eval::evaluate_predictions(&g, &p)?;
    eval::write_report(&report, out, format)?;
    println!(
        "mean accuracy {:.4} ({}/{} label decisions over {} articles)",
        report.mean_accuracy, report.correct_decisions, report.total_decisions, report.n_examples
    );
    Ok(())
}
