//! Sequential stage runner: scrape, build-corpus, train-embed or
//! train-prompt, predict, evaluate.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use log::info;

use tcontrol_core::eval::ReportFormat;
use tcontrol_core::prompt::STATE_FILE;

use crate::commands::{self, Predictor};
use crate::config::{PipelineSection, RunConfig};
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scrape,
    BuildCorpus,
    TrainEmbed,
    TrainPrompt,
    Predict,
    Evaluate,
}

impl Stage {
    const ALL: [Stage; 6] = [
        Stage::Scrape,
        Stage::BuildCorpus,
        Stage::TrainEmbed,
        Stage::TrainPrompt,
        Stage::Predict,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Scrape => "scrape",
            Stage::BuildCorpus => "build-corpus",
            Stage::TrainEmbed => "train-embed",
            Stage::TrainPrompt => "train-prompt",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
        }
    }

    /// Position in the pipeline; the two training stages share a slot.
    fn rank(self) -> u8 {
        match self {
            Stage::Scrape => 0,
            Stage::BuildCorpus => 1,
            Stage::TrainEmbed | Stage::TrainPrompt => 2,
            Stage::Predict => 3,
            Stage::Evaluate => 4,
        }
    }

    fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

#[derive(Debug)]
pub struct StageFailure {
    pub stage: &'static str,
    pub cause: anyhow::Error,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {:#}", self.stage, self.cause)
    }
}

impl std::error::Error for StageFailure {}

fn fail(stage: Stage, cause: anyhow::Error) -> anyhow::Error {
    StageFailure {
        stage: stage.name(),
        cause,
    }
    .into()
}

/// Check the stage list and return it parsed.
pub fn plan(names: &[String]) -> Result<Vec<Stage>> {
    if names.is_empty() {
        return Err(UsageError("[pipeline] stages is empty".into()).into());
    }
    let mut stages: Vec<Stage> = Vec::new();
    for n in names {
        let st = Stage::parse(n).ok_or_else(|| {
            let known: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
            UsageError(format!("unknown pipeline stage {n:?} (known: {})", known.join(", ")))
        })?;
        if let Some(prev) = stages.iter().find(|p| p.rank() >= st.rank()) {
            let cause = if prev.rank() == st.rank() {
                anyhow!("listed after {}; each pipeline slot runs at most once", prev.name())
            } else {
                anyhow!(
                    "listed after {}, but it must run before it (order: scrape, build-corpus, train-embed | train-prompt, predict, evaluate)",
                    prev.name()
                )
            };
            return Err(fail(st, cause));
        }
        stages.push(st);
    }
    Ok(stages)
}

struct Paths<'a> {
    p: &'a PipelineSection,
    work: PathBuf,
}

impl Paths<'_> {
    fn or_work(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.work.join(name))
    }
}

fn required(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    path.clone().ok_or_else(|| anyhow!("[pipeline] {key} is not set"))
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<()> {
    let p = cfg
        .pipeline
        .as_ref()
        .ok_or_else(|| UsageError("config file has no [pipeline] table".into()))?;
    let stages = plan(&p.stages)?;
    let paths = Paths {
        p,
        work: p.workdir.clone().expect("workdir defaulted on load"),
    };
    std::fs::create_dir_all(&paths.work).map_err(|e| anyhow!("cannot create {}: {e}", paths.work.display()))?;
    let format = commands::parse_format(&cfg.evaluate.format)?;

    let raw = paths.or_work(&p.raw, "raw.jsonl");
    let corpus = paths.or_work(&p.corpus, "corpus.jsonl");
    let trained = stages.iter().find(|s| s.rank() == 2).copied();
    let model = match trained {
        Some(Stage::TrainEmbed) => paths.or_work(&p.model, "embed-model"),
        Some(_) => paths.or_work(&p.model, "prompt-state"),
        None => p.model.clone().unwrap_or_default(),
    };
    let predictions = paths.or_work(&p.predictions, "predictions.jsonl");
    let report = paths.or_work(
        &p.report,
        match format {
            ReportFormat::Json => "report.json",
            ReportFormat::Text => "report.txt",
        },
    );

    for &stage in &stages {
        info!("pipeline: {}", stage.name());
        let r = match stage {
            Stage::Scrape => required(&paths.p.urls, "urls").and_then(|urls| {
                commands::scrape(
                    &cfg.fetch,
                    &urls,
                    &raw,
                    cfg.scrape.date.as_deref(),
                    &cfg.scrape.keywords,
                )
            }),
            Stage::BuildCorpus => required(&p.labels, "labels").and_then(|labels| {
                commands::build_corpus(&raw, &labels, cfg.corpus.train_count, cfg.corpus.seed, &corpus)
            }),
            Stage::TrainEmbed => commands::train_embed(&cfg.embed, &corpus, &model),
            Stage::TrainPrompt => commands::train_prompt(&cfg.prompt, &corpus, &model),
            Stage::Predict => predictor_for(trained, &model)
                .and_then(|pr| commands::predict(&pr, p.predict_in.as_deref().unwrap_or(&corpus), &predictions)),
            Stage::Evaluate => commands::evaluate(&corpus, &predictions, &report, format),
        };
        r.map_err(|e| fail(stage, e))?;
    }
    Ok(())
}

fn predictor_for(trained: Option<Stage>, model: &Path) -> Result<Predictor> {
    match trained {
        Some(Stage::TrainEmbed) => Ok(Predictor::Embed(model.to_path_buf())),
        Some(_) => Ok(Predictor::Prompt(model.to_path_buf())),
        None if model.as_os_str().is_empty() => Err(anyhow!("[pipeline] model is not set and no training stage runs")),
        None if model.join(STATE_FILE).is_file() => Ok(Predictor::Prompt(model.to_path_buf())),
        None => Ok(Predictor::Embed(model.to_path_buf())),
    }
}
