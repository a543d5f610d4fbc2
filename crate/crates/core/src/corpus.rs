//! Preprocessing, train/eval splitting and line-delimited persistence of the
//! labelled corpus.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::article::{Article, RawArticle};
use crate::labels::{LabelSet, LABEL_NAMES};

pub const MAX_BODY_CHARS: usize = 512;
pub const SCHEMA_VERSION: &str = "tcontrol-corpus/1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("need more than {train_count} examples to hold out an eval split, got {available}")]
    InsufficientExamples { train_count: usize, available: usize },
    #[error("train_count must be positive")]
    ZeroTrainCount,
    #[error("article {0} appears more than once")]
    DuplicateArticle(String),
    #[error("{path}:{line}: {message}")]
    SchemaViolation {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("label file {path}: {message}")]
    LabelFile { path: PathBuf, message: String },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preprocessed {
    Kept(Article),
    Dropped(DropReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    EmptyBody,
    MissingUrl,
}

impl Preprocessed {
    pub fn kept(self) -> Option<Article> {
        match self {
            Preprocessed::Kept(a) => Some(a),
            Preprocessed::Dropped(_) => None,
        }
    }
}

/// Strip leading/trailing whitespace and collapse interior runs to one space.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First `max_chars` characters (not bytes) of `text`.
pub fn truncate_chars(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((byte_idx, _)) => &text[..byte_idx],
        None => text,
    }
}

/// Normalise whitespace, then keep the first 512 characters of the body.
///
/// A cut that lands just after a space leaves trailing whitespace; it is
/// trimmed so that preprocessing an already-preprocessed article is a no-op.
pub fn preprocess(raw: &RawArticle) -> Preprocessed {
    if raw.url.trim().is_empty() {
        return Preprocessed::Dropped(DropReason::MissingUrl);
    }
    let body = normalize_whitespace(&raw.body);
    let body = truncate_chars(&body, MAX_BODY_CHARS).trim_end().to_string();
    if body.is_empty() {
        return Preprocessed::Dropped(DropReason::EmptyBody);
    }
    Preprocessed::Kept(Article {
        id: raw.id(),
        url: raw.url.clone(),
        title: normalize_whitespace(&raw.title),
        body,
        published_at: raw.published_at,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub article: Article,
    pub labels: LabelSet,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub examples: Vec<LabeledExample>,
    pub label_order: [String; 5],
    pub schema_version: String,
}

pub(crate) fn canonical_label_order() -> [String; 5] {
    LABEL_NAMES.map(str::to_string)
}

impl Corpus {
    /// Checks label order and that no article id is repeated (which also
    /// makes train and eval disjoint).
    pub fn new(examples: Vec<LabeledExample>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for ex in &examples {
            if !seen.insert(ex.article.id.as_str()) {
                return Err(CorpusError::DuplicateArticle(ex.article.id.clone()));
            }
        }
        Ok(Corpus {
            examples,
            label_order: canonical_label_order(),
            schema_version: SCHEMA_VERSION.to_string(),
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter().filter(move |e| e.split == split)
    }

    pub fn train(&self) -> impl Iterator<Item = &LabeledExample> {
        self.split(Split::Train)
    }

    pub fn eval(&self) -> impl Iterator<Item = &LabeledExample> {
        self.split(Split::Eval)
    }
}

/// Deterministically shuffle under `seed`; the first `train_count` become
/// the train split, the rest eval.
pub fn split_corpus(examples: Vec<(Article, LabelSet)>, train_count: usize, seed: u64) -> Result<Corpus, CorpusError> {
    if train_count == 0 {
        return Err(CorpusError::ZeroTrainCount);
    }
    if train_count >= examples.len() {
        return Err(CorpusError::InsufficientExamples {
            train_count,
            available: examples.len(),
        });
    }
    let mut examples = examples;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples.shuffle(&mut rng);
    let labeled = examples
        .into_iter()
        .enumerate()
        .map(|(i, (article, labels))| LabeledExample {
            article,
            labels,
            split: if i < train_count { Split::Train } else { Split::Eval },
        })
        .collect();
    Corpus::new(labeled)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema_version: String,
    label_order: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    url: String,
    title: String,
    body: String,
    published_at: Option<DateTime<Utc>>,
    labels: LabelSet,
    split: Split,
}

/// Write `bytes` to a sibling temp file and rename it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    let write = || -> io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CorpusError::io(path, e)
    })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    let header = Header {
        schema_version: corpus.schema_version.clone(),
        label_order: corpus.label_order.to_vec(),
    };
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for ex in &corpus.examples {
        let a = &ex.article;
        let rec = Record {
            id: a.id.clone(),
            url: a.url.clone(),
            title: a.title.clone(),
            body: a.body.clone(),
            published_at: a.published_at,
            labels: ex.labels,
            split: ex.split,
        };
        serde_json::to_writer(&mut out, &rec).expect("record serializes");
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let violation = |line: usize, message: String| CorpusError::SchemaViolation {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines().enumerate();
    let header_line = match lines.next() {
        Some((_, line)) => line.map_err(|e| CorpusError::io(path, e))?,
        None => return Err(violation(1, "empty file, expected header".into())),
    };
    let header: Header = serde_json::from_str(&header_line).map_err(|e| violation(1, format!("header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(violation(
            1,
            format!("unsupported schema version {:?}", header.schema_version),
        ));
    }
    if header.label_order != LABEL_NAMES {
        return Err(violation(
            1,
            format!("label order {:?} differs from {:?}", header.label_order, LABEL_NAMES),
        ));
    }

    let mut examples = Vec::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| violation(idx + 1, e.to_string()))?;
        let body_chars = rec.body.chars().count();
        if body_chars > MAX_BODY_CHARS {
            return Err(violation(
                idx + 1,
                format!("body has {body_chars} characters, limit is {MAX_BODY_CHARS}"),
            ));
        }
        if rec.body.trim().is_empty() {
            return Err(violation(idx + 1, "empty body".into()));
        }
        examples.push(LabeledExample {
            article: Article {
                id: rec.id,
                url: rec.url,
                title: rec.title,
                body: rec.body,
                published_at: rec.published_at,
            },
            labels: rec.labels,
            split: rec.split,
        });
    }
    Corpus::new(examples).map_err(|e| match e {
        CorpusError::DuplicateArticle(id) => violation(0, format!("duplicate article id {id}")),
        other => other,
    })
}

/// Read a JSON-lines file of raw articles. An optional `id` field on each
/// line is ignored; ids are always re-derived from the URL.
pub fn load_raw_articles(path: &Path) -> Result<Vec<RawArticle>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut value: serde_json::Value = serde_json::from_str(l).map_err(|e| CorpusError::SchemaViolation {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if let Some(obj) = value.as_object_mut() {
                obj.remove("id");
            }
            serde_json::from_value(value).map_err(|e| CorpusError::SchemaViolation {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Write raw articles as JSON lines, each with its derived `id` first.
pub fn save_raw_articles(articles: &[RawArticle], path: &Path) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    for a in articles {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), a.id().into());
        if let serde_json::Value::Object(fields) = serde_json::to_value(a).expect("raw article serializes") {
            obj.extend(fields);
        }
        serde_json::to_writer(&mut out, &obj).expect("json to vec");
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// Parse the label sidecar: header `id,t_mil,t_loc,t_milcas,t_civcas,t_isis_vic`,
/// cells `0/1` or `true/false`. `id` is an article id or its URL.
pub fn load_label_csv(path: &Path) -> Result<HashMap<String, LabelSet>, CorpusError> {
    let err = |message: String| CorpusError::LabelFile {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
    let expected: Vec<&str> = std::iter::once("id").chain(LABEL_NAMES).collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(err(format!(
            "expected columns {expected:?}, found {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = HashMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| err(e.to_string()))?;
        let mut bits = [false; 5];
        for (i, bit) in bits.iter_mut().enumerate() {
            *bit = match &record[i + 1] {
                "1" | "true" | "TRUE" | "True" => true,
                "0" | "false" | "FALSE" | "False" | "" => false,
                other => {
                    return Err(err(format!(
                        "row {}: column {}: not a boolean: {other:?}",
                        row + 2,
                        LABEL_NAMES[i]
                    )))
                }
            };
        }
        if out.insert(record[0].to_string(), LabelSet::from_bits(bits)).is_some() {
            return Err(err(format!("row {}: duplicate id {}", row + 2, &record[0])));
        }
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct BuildReport {
    pub dropped: Vec<(String, DropReason)>,
    pub unlabeled: Vec<String>,
}

/// Preprocess raw articles, attach sidecar labels (articles without a label
/// row get the empty set and are reported), and split.
pub fn build_corpus(
    raw: &[RawArticle],
    labels: &HashMap<String, LabelSet>,
    train_count: usize,
    seed: u64,
) -> Result<(Corpus, BuildReport), CorpusError> {
    let mut report = BuildReport::default();
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for r in raw {
        match preprocess(r) {
            Preprocessed::Dropped(reason) => report.dropped.push((r.url.clone(), reason)),
            Preprocessed::Kept(article) => {
                if !seen.insert(article.id.clone()) {
                    return Err(CorpusError::DuplicateArticle(article.id));
                }
                let set = match labels.get(&article.id).or_else(|| labels.get(&article.url)) {
                    Some(s) => *s,
                    None => {
                        report.unlabeled.push(article.id.clone());
                        LabelSet::EMPTY
                    }
                };
                pairs.push((article, set));
            }
        }
    }
    let corpus = split_corpus(pairs, train_count, seed)?;
    Ok((corpus, report))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::article::{RawArticle, RetrievedVia};
    use chrono::TimeZone;

    pub fn raw(url: &str, title: &str, body: &str) -> RawArticle {
        RawArticle {
            url: url.into(),
            title: title.into(),
            body: body.into(),
            published_at: None,
            retrieved_via: RetrievedVia::Live,
            fetched_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    pub fn article(i: usize, body: &str) -> Article {
        preprocess(&raw(&format!("http://news.test/{i}"), &format!("t{i}"), body))
            .kept()
            .unwrap()
    }
}
