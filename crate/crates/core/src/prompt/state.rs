//! Trained prompt persistence and greedy label generation.

use std::fs;
use std::path::Path;

use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};

use super::collate::InputTokens;
use super::train::check_budget;
use super::{format_input, PromptError, PromptTuneConfig};
use crate::corpus::write_atomic;
use crate::labels::{parse_label_string, LabelSet};
use crate::lm::store::{read_tensor, serialize_tensors, tensor_bytes};
use crate::lm::{argmax, resolve_model, CausalLm};
use crate::scalar::Scalar;

pub const STATE_FILE: &str = "prompt.json";
pub const EMBEDDINGS_FILE: &str = "prompt.safetensors";
const EMBEDDINGS_TENSOR: &str = "prompt_embeddings";
const FORMAT: &str = "tcontrol-prompt/1";

/// The trained virtual tokens plus what is needed to reattach them.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptState<T: Scalar> {
    pub config: PromptTuneConfig,
    pub hidden: usize,
    /// `num_virtual_tokens × hidden`, row-major.
    pub embeddings: Vec<T>,
    /// Checksum of the base model the prompt was trained against.
    pub base_checksum: String,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: String,
    hidden: usize,
    base_checksum: String,
    config: PromptTuneConfig,
}

impl<T: Scalar> PromptState<T> {
    pub fn new(config: PromptTuneConfig, hidden: usize, embeddings: Vec<T>, base_checksum: String) -> Self {
        assert_eq!(embeddings.len(), config.num_virtual_tokens * hidden);
        PromptState {
            config,
            hidden,
            embeddings,
            base_checksum,
        }
    }

    pub fn num_virtual_tokens(&self) -> usize {
        self.config.num_virtual_tokens
    }

    pub fn trainable_params(&self) -> usize {
        self.embeddings.len()
    }

    pub fn save(&self, dir: &Path) -> Result<(), PromptError> {
        let io = |e| PromptError::Io(dir.to_path_buf(), e);
        fs::create_dir_all(dir).map_err(io)?;
        let meta = StateFile {
            format: FORMAT.into(),
            hidden: self.hidden,
            base_checksum: self.base_checksum.clone(),
            config: self.config.clone(),
        };
        let json = serde_json::to_vec_pretty(&meta).expect("state serializes");
        let tensor = tensor_bytes(
            EMBEDDINGS_TENSOR,
            &[self.num_virtual_tokens(), self.hidden],
            &self.embeddings,
        );
        let bytes = serialize_tensors::<T>(&[tensor]).map_err(|e| PromptError::Format(e.to_string()))?;
        let write =
            |name: &str, b: &[u8]| write_atomic(&dir.join(name), b).map_err(|e| PromptError::Format(e.to_string()));
        write(EMBEDDINGS_FILE, &bytes)?;
        write(STATE_FILE, &json)
    }

    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| fs::read(dir.join(name)).map_err(|e| PromptError::Io(dir.join(name), e));
        let meta: StateFile = serde_json::from_slice(&read(STATE_FILE)?)
            .map_err(|e| PromptError::Format(format!("{STATE_FILE}: {e}")))?;
        if meta.format != FORMAT {
            return Err(PromptError::Format(format!("unsupported format {:?}", meta.format)));
        }
        let bytes = read(EMBEDDINGS_FILE)?;
        let st = SafeTensors::deserialize(&bytes).map_err(|e| PromptError::Format(e.to_string()))?;
        let embeddings = read_tensor::<T>(&st, EMBEDDINGS_TENSOR, &[meta.config.num_virtual_tokens, meta.hidden])
            .map_err(PromptError::Format)?;
        Ok(PromptState::new(
            meta.config,
            meta.hidden,
            embeddings,
            meta.base_checksum,
        ))
    }
}

/// Generated continuation and the labels parsed from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationOutput {
    pub raw: String,
    pub labels: LabelSet,
    pub unknown_tokens: Vec<String>,
}

/// A frozen base model with a trained prompt attached.
#[derive(Debug, Clone)]
pub struct PromptedModel<T: Scalar> {
    pub model: CausalLm<T>,
    pub state: PromptState<T>,
}

impl<T: Scalar> PromptedModel<T> {
    /// Fails if `model` is not the one the prompt was trained against.
    pub fn new(model: CausalLm<T>, state: PromptState<T>) -> Result<Self, PromptError> {
        let actual = model.checksum();
        if actual != state.base_checksum {
            return Err(PromptError::ChecksumMismatch {
                expected: state.base_checksum,
                actual,
            });
        }
        if model.config.hidden != state.hidden {
            return Err(PromptError::Format(format!(
                "prompt width {} does not match model width {}",
                state.hidden, model.config.hidden
            )));
        }
        check_budget(&model, &state.config)?;
        Ok(PromptedModel { model, state })
    }

    /// Load a saved prompt and the base model it names.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let state = PromptState::<T>::load(dir)?;
        let model = resolve_model::<T>(&state.config.model_id)?;
        Self::new(model, state)
    }

    /// Greedy decoding after `text : {body} Label : ` until end-of-sequence
    /// or `max_new_tokens`.
    pub fn generate_labels(&self, body: &str) -> GenerationOutput {
        let tok = &self.model.tokenizer;
        let cfg = &self.state.config;
        let mut input = InputTokens::new(tok, &format_input(body));
        input.truncate_left(input.len().saturating_sub(cfg.max_input_tokens));
        let mut ids = input.into_ids();
        let ctx = ids.len();
        let vocab = self.model.config.vocab_size;
        for _ in 0..cfg.max_new_tokens {
            let fwd = self.model.forward(&self.state.embeddings, &ids);
            let next = argmax(fwd.logits_at(fwd.seq_len - 1, vocab));
            if next == tok.eos_id() {
                break;
            }
            ids.push(next);
        }
        let raw = tok.decode(&ids[ctx..]);
        let parsed = parse_label_string(&raw);
        GenerationOutput {
            raw,
            labels: parsed.labels,
            unknown_tokens: parsed.unknown_tokens,
        }
    }
}
