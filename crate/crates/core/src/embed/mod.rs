//! Few-shot multi-label classifier: a sentence encoder tuned on contrastive
//! pairs, then five one-vs-rest logistic heads on its embeddings.

mod encoder;
mod head;
mod pairs;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encoder::{EncoderConfig, HashedEncoder, HASHED_BOW};
pub use head::{fit_head, Head};
pub use pairs::{generate_pairs, Pair};

use crate::corpus::{canonical_label_order, write_atomic, Corpus, LabeledExample};
use crate::labels::{Label, LabelSet, LABEL_NAMES};
use crate::lm::store::{read_tensor, serialize_tensors, tensor_bytes};
use crate::optim::{linear_warmup_decay, warmup_steps, AdamW};
use crate::scalar::Scalar;
use head::HeadFile;

pub const ENCODER_FILE: &str = "encoder.json";
pub const ENCODER_WEIGHTS_FILE: &str = "encoder.safetensors";
pub const HEADS_FILE: &str = "heads.json";
const ENCODER_FORMAT: &str = "tcontrol-encoder/1";
const HEADS_FORMAT: &str = "tcontrol-embed-heads/1";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("need at least 2 training examples, got {0}")]
    InsufficientData(usize),
    #[error("label {0} has a single class in the training data")]
    DegenerateLabel(Label),
    #[error("cannot load encoder {id:?}: {reason}")]
    EncoderLoad { id: String, reason: String },
    #[error("invalid embed config: {0}")]
    InvalidConfig(String),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("malformed embed model: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedTrainConfig {
    pub encoder_id: String,
    /// Pair-sampling rounds per label per epoch; each round gives one
    /// positive and one negative pair.
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub decision_threshold: f64,
    pub learning_rate: f64,
    /// Skip contrastive tuning and fit the heads on the untouched encoder.
    pub freeze_encoder: bool,
    /// Inverse L2 strength of the logistic heads.
    pub head_c: f64,
}

impl Default for EmbedTrainConfig {
    fn default() -> Self {
        EmbedTrainConfig {
            encoder_id: HASHED_BOW.to_string(),
            iterations_per_epoch: 20,
            batch_size: 1,
            epochs: 1,
            seed: 0,
            decision_threshold: 0.5,
            learning_rate: 1e-3,
            freeze_encoder: false,
            head_c: 1.0,
        }
    }
}

impl EmbedTrainConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidConfig(m.to_string()));
        if self.iterations_per_epoch == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("iterations_per_epoch, batch_size and epochs must be positive");
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return bad("decision_threshold must lie strictly between 0 and 1");
        }
        if !(self.learning_rate > 0.0) || !(self.head_c > 0.0) {
            return bad("learning_rate and head_c must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedModel<T: Scalar> {
    pub encoder: HashedEncoder<T>,
    /// In canonical label order.
    pub heads: [Head<T>; 5],
    pub decision_threshold: f64,
}

impl<T: Scalar> EmbedModel<T> {
    pub fn probabilities(&self, body: &str) -> [f64; 5] {
        let x = self.encoder.embed(body);
        std::array::from_fn(|i| self.heads[i].probability(&x).as_f64())
    }

    pub fn predict_with_threshold(&self, body: &str, threshold: f64) -> LabelSet {
        let p = self.probabilities(body);
        LabelSet::from_bits(std::array::from_fn(|i| p[i] >= threshold))
    }

    pub fn predict(&self, body: &str) -> LabelSet {
        self.predict_with_threshold(body, self.decision_threshold)
    }

    pub fn save(&self, dir: &Path) -> Result<(), EmbedError> {
        fs::create_dir_all(dir).map_err(|e| EmbedError::Io(dir.to_path_buf(), e))?;
        save_encoder(&self.encoder, dir)?;
        let heads = HeadsFile {
            format: HEADS_FORMAT.into(),
            decision_threshold: self.decision_threshold,
            label_order: canonical_label_order().to_vec(),
            heads: LABEL_NAMES
                .iter()
                .zip(&self.heads)
                .map(|(name, h)| HeadFile::from_head(name, h))
                .collect(),
        };
        let json = serde_json::to_vec_pretty(&heads).expect("heads serialize");
        write_atomic(&dir.join(HEADS_FILE), &json).map_err(|e| EmbedError::Format(e.to_string()))
    }

    pub fn load(dir: &Path) -> Result<Self, EmbedError> {
        let encoder = load_encoder(dir)?;
        let path = dir.join(HEADS_FILE);
        let bytes = fs::read(&path).map_err(|e| EmbedError::Io(path.clone(), e))?;
        let file: HeadsFile =
            serde_json::from_slice(&bytes).map_err(|e| EmbedError::Format(format!("{HEADS_FILE}: {e}")))?;
        if file.format != HEADS_FORMAT {
            return Err(EmbedError::Format(format!(
                "unsupported heads format {:?}",
                file.format
            )));
        }
        if file.label_order != LABEL_NAMES || file.heads.len() != 5 {
            return Err(EmbedError::Format(format!(
                "label order {:?} is not canonical",
                file.label_order
            )));
        }
        for (h, name) in file.heads.iter().zip(LABEL_NAMES) {
            if h.label() != name {
                return Err(EmbedError::Format(format!(
                    "head for {} found where {name} expected",
                    h.label()
                )));
            }
            if let HeadFile::Logistic { weights, .. } = h {
                if weights.len() != encoder.dim() {
                    return Err(EmbedError::Format(format!("head {name} has {} weights", weights.len())));
                }
            }
        }
        let mut heads = file.heads.into_iter().map(HeadFile::into_head::<T>);
        Ok(EmbedModel {
            encoder,
            heads: std::array::from_fn(|_| heads.next().unwrap()),
            decision_threshold: file.decision_threshold,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct HeadsFile {
    format: String,
    decision_threshold: f64,
    label_order: Vec<String>,
    heads: Vec<HeadFile>,
}

#[derive(Serialize, Deserialize)]
struct EncoderFile {
    format: String,
    config: EncoderConfig,
}

fn save_encoder<T: Scalar>(enc: &HashedEncoder<T>, dir: &Path) -> Result<(), EmbedError> {
    let c = enc.config;
    let (table, w, b) = enc.split();
    let tensors = [
        tensor_bytes("embeddings", &[c.buckets, c.dim], table),
        tensor_bytes("dense.weight", &[c.dim, c.dim], w),
        tensor_bytes("dense.bias", &[c.dim], b),
    ];
    let bytes = serialize_tensors::<T>(&tensors).map_err(|e| EmbedError::Format(e.to_string()))?;
    let meta = EncoderFile {
        format: ENCODER_FORMAT.into(),
        config: c,
    };
    let json = serde_json::to_vec_pretty(&meta).expect("encoder config serializes");
    let write = |name: &str, b: &[u8]| write_atomic(&dir.join(name), b).map_err(|e| EmbedError::Format(e.to_string()));
    write(ENCODER_WEIGHTS_FILE, &bytes)?;
    write(ENCODER_FILE, &json)
}

fn load_encoder<T: Scalar>(dir: &Path) -> Result<HashedEncoder<T>, EmbedError> {
    let read = |name: &str| fs::read(dir.join(name)).map_err(|e| EmbedError::Io(dir.join(name), e));
    let meta: EncoderFile =
        serde_json::from_slice(&read(ENCODER_FILE)?).map_err(|e| EmbedError::Format(format!("{ENCODER_FILE}: {e}")))?;
    if meta.format != ENCODER_FORMAT {
        return Err(EmbedError::Format(format!(
            "unsupported encoder format {:?}",
            meta.format
        )));
    }
    let c = meta.config;
    let bytes = read(ENCODER_WEIGHTS_FILE)?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| EmbedError::Format(e.to_string()))?;
    let mut params = read_tensor::<T>(&st, "embeddings", &[c.buckets, c.dim]).map_err(EmbedError::Format)?;
    params.extend(read_tensor::<T>(&st, "dense.weight", &[c.dim, c.dim]).map_err(EmbedError::Format)?);
    params.extend(read_tensor::<T>(&st, "dense.bias", &[c.dim]).map_err(EmbedError::Format)?);
    HashedEncoder::from_parts(c, params).map_err(EmbedError::Format)
}

/// `builtin:hashed-bow`, or a directory holding a saved encoder (for
/// example a previously trained embed model).
pub fn resolve_encoder<T: Scalar>(encoder_id: &str) -> Result<HashedEncoder<T>, EmbedError> {
    if encoder_id == HASHED_BOW {
        return Ok(HashedEncoder::new(EncoderConfig::default()));
    }
    let dir = Path::new(encoder_id);
    if dir.join(ENCODER_FILE).is_file() {
        return load_encoder(dir).map_err(|e| EmbedError::EncoderLoad {
            id: encoder_id.into(),
            reason: e.to_string(),
        });
    }
    Err(EmbedError::EncoderLoad {
        id: encoder_id.into(),
        reason: format!("not an encoder directory and not a builtin encoder (available: {HASHED_BOW})"),
    })
}

/// Mean squared cosine error over `pairs`.
pub fn pair_loss<T: Scalar>(encoder: &HashedEncoder<T>, pairs: &[Pair]) -> f64 {
    let mut scratch = vec![T::zero(); encoder.params.len()];
    let total: f64 = pairs
        .iter()
        .map(|p| encoder::pair_loss(encoder, &p.left, &p.right, T::lit(p.target()), T::one(), &mut scratch).as_f64())
        .sum();
    total / pairs.len().max(1) as f64
}

/// Contrastive tuning of `encoder` in place. Labels with a single class are
/// skipped. Returns the number of optimisation steps taken.
pub fn tune_encoder<T: Scalar>(
    encoder: &mut HashedEncoder<T>,
    train: &[LabeledExample],
    config: &EmbedTrainConfig,
) -> usize {
    let mut pairs = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 0..config.epochs {
        let mut epoch_pairs = Vec::new();
        for label in Label::ALL {
            let seed = config.seed ^ ((epoch as u64) << 32 | label.index() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
            match generate_pairs(train, label, config.iterations_per_epoch, seed) {
                Ok(p) => epoch_pairs.extend(p),
                Err(_) => log::info!("{label}: single class, no contrastive pairs"),
            }
        }
        epoch_pairs.shuffle(&mut rng);
        pairs.extend(epoch_pairs);
    }
    let batches: Vec<&[Pair]> = pairs.chunks(config.batch_size).collect();
    let total = batches.len();
    let warmup = warmup_steps(0.1, total);
    let mut opt = AdamW::<T>::new(encoder.params.len(), config.learning_rate, 0.01);
    let mut grads = vec![T::zero(); encoder.params.len()];
    for (step, batch) in batches.iter().enumerate() {
        grads.fill(T::zero());
        let w = T::one() / T::from_usize(batch.len()).unwrap();
        for p in *batch {
            encoder::pair_loss(encoder, &p.left, &p.right, T::lit(p.target()), w, &mut grads);
        }
        let scale = linear_warmup_decay(step, warmup, total);
        opt.step(&mut encoder.params, &grads, T::lit(scale));
    }
    total
}

/// Tune the encoder (unless frozen), embed every example once and fit the
/// five heads.
pub fn train_embed_examples<T: Scalar>(
    train: &[LabeledExample],
    config: &EmbedTrainConfig,
) -> Result<EmbedModel<T>, EmbedError> {
    config.validate()?;
    if train.len() < 2 {
        return Err(EmbedError::InsufficientData(train.len()));
    }
    let mut encoder = resolve_encoder::<T>(&config.encoder_id)?;
    if !config.freeze_encoder {
        let steps = tune_encoder(&mut encoder, train, config);
        log::info!("contrastive tuning: {steps} steps");
    }
    let xs: Vec<Vec<T>> = train.iter().map(|ex| encoder.embed(&ex.article.body)).collect();
    let heads = std::array::from_fn(|i| {
        let ys: Vec<bool> = train.iter().map(|ex| ex.labels.get(Label::ALL[i])).collect();
        fit_head(&xs, &ys, config.head_c)
    });
    Ok(EmbedModel {
        encoder,
        heads,
        decision_threshold: config.decision_threshold,
    })
}

pub fn train_embed<T: Scalar>(corpus: &Corpus, config: &EmbedTrainConfig) -> Result<EmbedModel<T>, EmbedError> {
    let train: Vec<LabeledExample> = corpus.train().cloned().collect();
    train_embed_examples(&train, config)
}

pub fn predict_embed<T: Scalar>(model: &EmbedModel<T>, body: &str) -> LabelSet {
    model.predict(body)
}
