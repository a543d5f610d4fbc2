//! Per-label binary accuracy over the five indicators.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_atomic, Corpus, CorpusError};
use crate::labels::{Label, LabelSet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} entries but predictions have {predicted}")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("majority baseline needs at least one training label set")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] CorpusError),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("no prediction for gold article {0}")]
    MissingPrediction(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn correct(&self) -> usize {
        self.tp + self.tn
    }

    fn record(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub accuracy: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub gold: LabelSet,
    pub predicted: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One entry per label, canonical order.
    pub per_label: Vec<LabelScore>,
    pub mean_accuracy: f64,
    pub n_examples: usize,
    /// Correct label decisions out of `5 * n_examples`, kept as integers so
    /// the mean can be compared as an exact fraction.
    pub correct_decisions: usize,
    pub total_decisions: usize,
    pub predictions: Vec<PredictionRecord>,
}

impl EvalReport {
    pub fn per_label_accuracy(&self) -> BTreeMap<String, f64> {
        self.per_label.iter().map(|s| (s.label.clone(), s.accuracy)).collect()
    }

    pub fn accuracy(&self, label: Label) -> f64 {
        self.per_label[label.index()].accuracy
    }

    /// Attach ids and raw generations to the per-example records.
    pub fn with_details(
        mut self,
        ids: impl IntoIterator<Item = Option<String>>,
        raws: impl IntoIterator<Item = Option<String>>,
    ) -> Self {
        for ((rec, id), raw) in self.predictions.iter_mut().zip(ids).zip(raws) {
            rec.id = id;
            rec.raw = raw;
        }
        self
    }
}

pub fn evaluate(gold: &[LabelSet], predicted: &[LabelSet]) -> Result<EvalReport, EvalError> {
    if gold.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let n = gold.len();
    if n == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut confusion = [Confusion::default(); 5];
    for (g, p) in gold.iter().zip(predicted) {
        for label in Label::ALL {
            confusion[label.index()].record(g.get(label), p.get(label));
        }
    }
    let per_label: Vec<LabelScore> = Label::ALL
        .into_iter()
        .map(|l| {
            let c = confusion[l.index()];
            LabelScore {
                label: l.name().to_string(),
                accuracy: c.correct() as f64 / n as f64,
                confusion: c,
            }
        })
        .collect();
    let correct: usize = confusion.iter().map(Confusion::correct).sum();
    let total = n * Label::ALL.len();
    Ok(EvalReport {
        per_label,
        // Every label has the same denominator, so the pooled fraction is the
        // unweighted mean of the per-label accuracies.
        mean_accuracy: correct as f64 / total as f64,
        n_examples: n,
        correct_decisions: correct,
        total_decisions: total,
        predictions: gold
            .iter()
            .zip(predicted)
            .map(|(g, p)| PredictionRecord {
                id: None,
                gold: *g,
                predicted: *p,
                raw: None,
            })
            .collect(),
    })
}

/// A predictor that ignores its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantPredictor(pub LabelSet);

impl ConstantPredictor {
    pub fn predict(&self, _body: &str) -> LabelSet {
        self.0
    }
}

/// Marks true exactly the labels whose training frequency is strictly above
/// one half.
pub fn majority_baseline(train_gold: &[LabelSet]) -> Result<ConstantPredictor, EvalError> {
    if train_gold.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = train_gold.len();
    let mut out = LabelSet::EMPTY;
    for label in Label::ALL {
        let count = train_gold.iter().filter(|s| s.get(label)).count();
        out.set(label, 2 * count > n);
    }
    Ok(ConstantPredictor(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?} (expected text or json)")),
        }
    }
}

pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>4} {:>4} {:>4} {:>4}",
        "label", "accuracy", "tp", "fp", "tn", "fn"
    );
    for s in &report.per_label {
        let c = s.confusion;
        let _ = writeln!(
            out,
            "{:<12} {:>8.4} {:>4} {:>4} {:>4} {:>4}",
            s.label, s.accuracy, c.tp, c.fp, c.tn, c.fn_
        );
    }
    let _ = writeln!(
        out,
        "{:<12} {:>8.4}  ({}/{} decisions, {} examples)",
        "mean", report.mean_accuracy, report.correct_decisions, report.total_decisions, report.n_examples
    );
    out
}

pub fn write_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<(), EvalError> {
    let bytes = match format {
        ReportFormat::Text => render_text(report).into_bytes(),
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report).expect("report serializes");
            v.push(b'\n');
            v
        }
    };
    write_atomic(path, &bytes)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| EvalError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub labels: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

pub fn save_predictions(predictions: &[Prediction], path: &Path) -> Result<(), EvalError> {
    let mut out = Vec::new();
    for p in predictions {
        serde_json::to_writer(&mut out, p).expect("prediction serializes");
        out.push(b'\n');
    }
    write_atomic(path, &out)?;
    Ok(())
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let format = |message: String| EvalError::Format {
            path: format!("{}:{}", path.display(), i + 1),
            message,
        };
        let p: Prediction = serde_json::from_str(line).map_err(|e| format(e.to_string()))?;
        if !seen.insert(p.id.clone()) {
            return Err(format(format!("duplicate id {}", p.id)));
        }
        out.push(p);
    }
    Ok(out)
}

/// Score predictions against the eval split of `gold`, matching by article
/// id. Predictions for other articles are ignored.
pub fn evaluate_predictions(gold: &Corpus, predictions: &[Prediction]) -> Result<EvalReport, EvalError> {
    let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut gold_sets = Vec::new();
    let mut matched = Vec::new();
    for ex in gold.eval() {
        let p = by_id
            .get(ex.article.id.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(ex.article.id.clone()))?;
        gold_sets.push(ex.labels);
        matched.push(*p);
    }
    let predicted: Vec<LabelSet> = matched.iter().map(|p| p.labels).collect();
    Ok(evaluate(&gold_sets, &predicted)?.with_details(
        matched.iter().map(|p| Some(p.id.clone())),
        matched.iter().map(|p| p.raw.clone()),
    ))
}
