//! Minimal causal language model used as the frozen base for prompt tuning.

pub mod builtin;
pub mod model;
pub mod store;
pub mod tokenizer;

use std::path::Path;

use thiserror::Error;

pub use model::{argmax, cross_entropy, CausalLm, Forward, LmConfig, ParamLayout, TensorSpec};
pub use tokenizer::WordTokenizer;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("cannot load model {id:?}: {reason}")]
    ModelLoad { id: String, reason: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("malformed model files: {0}")]
    Format(String),
}

/// Resolve a model identifier: `builtin:tiny-instruct`, or a directory
/// written by [`store::save_model`].
pub fn resolve_model<T: Scalar>(model_id: &str) -> Result<CausalLm<T>, LmError> {
    if model_id == builtin::TINY_INSTRUCT {
        return builtin::load_or_pretrain(&builtin::Recipe::default());
    }
    let dir = Path::new(model_id);
    if dir.join(store::CONFIG_FILE).is_file() {
        return store::load_model(dir).map_err(|e| LmError::ModelLoad {
            id: model_id.to_string(),
            reason: e.to_string(),
        });
    }
    Err(LmError::ModelLoad {
        id: model_id.to_string(),
        reason: format!(
            "not a model directory and not a builtin model (available: {})",
            builtin::TINY_INSTRUCT
        ),
    })
}
