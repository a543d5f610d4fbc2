//! TOML run configuration. Command-line flags override file values, which
//! override built-in defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tcontrol_core::embed::EmbedTrainConfig;
use tcontrol_core::prompt::PromptTuneConfig;
use tcontrol_scraper::FetchConfig;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Applied to every stage that takes a seed.
    pub seed: Option<u64>,
    pub log_level: Option<String>,
    pub fetch: FetchConfig,
    pub scrape: ScrapeSection,
    pub corpus: CorpusSection,
    pub embed: EmbedTrainConfig,
    pub prompt: PromptTuneConfig,
    pub evaluate: EvaluateSection,
    pub pipeline: Option<PipelineSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScrapeSection {
    /// Default snapshot date (YYYY-MM-DD) for URLs listed without one.
    pub date: Option<String>,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub train_count: usize,
    pub seed: u64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            train_count: 15,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub format: String,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection { format: "json".into() }
    }
}

pub const DEFAULT_WORKDIR: &str = "tcontrol-run";

/// Stage list and file locations for `pipeline`. Relative paths are
/// resolved against the config file's directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub stages: Vec<String>,
    /// Where stage outputs go unless named explicitly (default
    /// `tcontrol-run` next to the config file).
    pub workdir: Option<PathBuf>,
    pub urls: Option<PathBuf>,
    pub raw: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub predict_in: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("config file {}: {e}", path.display())))?;
        if let Some(p) = cfg.pipeline.as_mut() {
            let base = path.parent().unwrap_or(Path::new("."));
            p.workdir.get_or_insert_with(|| PathBuf::from(DEFAULT_WORKDIR));
            for slot in [
                &mut p.workdir,
                &mut p.urls,
                &mut p.raw,
                &mut p.labels,
                &mut p.corpus,
                &mut p.model,
                &mut p.predict_in,
                &mut p.predictions,
                &mut p.report,
            ] {
                if let Some(rel) = slot.as_mut() {
                    if rel.is_relative() {
                        *rel = base.join(&*rel);
                    }
                }
            }
        }
        Ok(cfg)
    }

    /// Push a seed into every section that has one.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.corpus.seed = seed;
        self.embed.seed = seed;
        self.prompt.seed = seed;
    }
}
