//! Prompt tuning: learn a few virtual-token embeddings, prepended to every
//! input of a frozen causal LM, so that it writes the label string after
//! `Label :`.

mod collate;
mod state;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use collate::{collate, CollatedBatch, IGNORE_INDEX};
pub use state::{GenerationOutput, PromptState, PromptedModel, EMBEDDINGS_FILE, STATE_FILE};
pub use train::{
    collate_examples, dataset_loss, initial_prompt, sequence_loss, train_prompt, train_prompt_with_model, TrainOutcome,
};

use crate::corpus::LabeledExample;
use crate::labels::render_label_string;
use crate::lm::{builtin, LmError};

/// Label definitions used to initialise the virtual tokens.
pub const DEFAULT_INIT_TEXT: &str = "Give each of these following labels a 0 if false and a 1 if true:
t_mil - Event is about war/military operations,
t_loc - Event report includes reference to specific location,
t_milcas - Event report mentions military casualties,
t_civcas - Event report mentions civilian casualties,
t_isis_vic - ISIS won the conflict";

const INPUT_HEAD: &str = "text : ";
const INPUT_MARKER: &str = " Label : ";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    ModelLoad(#[from] LmError),
    #[error("the corpus has no training examples")]
    EmptyTrainSplit,
    #[error("label span of {target_tokens} tokens does not fit in {max_len}")]
    TargetTooLong { target_tokens: usize, max_len: usize },
    #[error("invalid prompt-tuning config: {0}")]
    InvalidConfig(String),
    #[error("base model checksum {actual} does not match the {expected} recorded in the prompt state")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("malformed prompt state: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTuneConfig {
    pub model_id: String,
    pub num_virtual_tokens: usize,
    pub init_text: String,
    pub max_input_tokens: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Fraction of the optimisation steps spent warming up.
    pub warmup: f64,
    pub weight_decay: f64,
    pub max_new_tokens: usize,
    /// Overrides `epochs` when set; the data is cycled (re-shuffled each
    /// pass) until this many steps have run.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for PromptTuneConfig {
    fn default() -> Self {
        PromptTuneConfig {
            model_id: builtin::TINY_INSTRUCT.to_string(),
            num_virtual_tokens: 8,
            init_text: DEFAULT_INIT_TEXT.to_string(),
            max_input_tokens: 256,
            batch_size: 1,
            learning_rate: 3e-2,
            epochs: 1,
            warmup: 0.06,
            weight_decay: 0.0,
            max_new_tokens: 24,
            max_steps: None,
            seed: 0,
        }
    }
}

impl PromptTuneConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: &str| Err(PromptError::InvalidConfig(m.to_string()));
        if self.num_virtual_tokens == 0 {
            return bad("num_virtual_tokens must be positive");
        }
        if self.max_input_tokens == 0 || self.batch_size == 0 || self.epochs == 0 || self.max_new_tokens == 0 {
            return bad("max_input_tokens, batch_size, epochs and max_new_tokens must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return bad("warmup must be a fraction in [0, 1]");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive when set");
        }
        Ok(())
    }
}

/// `"text : " + body + " Label : "`.
pub fn format_input(body: &str) -> String {
    format!("{INPUT_HEAD}{body}{INPUT_MARKER}")
}

/// Inverse of [`format_input`]: `(head, body, marker)`.
pub(crate) fn split_formatted_input(input: &str) -> Option<(&str, &str, &str)> {
    let rest = input.strip_prefix(INPUT_HEAD)?;
    let body = rest.strip_suffix(INPUT_MARKER)?;
    Some((INPUT_HEAD, body, INPUT_MARKER))
}

/// Model input and expected continuation for one example.
pub fn build_input(example: &LabeledExample) -> (String, String) {
    (
        format_input(&example.article.body),
        render_label_string(&example.labels),
    )
}
