//! Core of the event-labelling toolkit: label schema, corpus handling,
//! evaluation, and the two classifiers (prompt-tuned causal LM and a
//! contrastively tuned sentence encoder with per-label heads).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f32`.

pub mod article;
pub mod corpus;
pub mod embed;
pub mod eval;
pub mod labels;
pub mod lm;
pub mod optim;
pub mod prompt;
pub mod scalar;
pub mod synthetic;

pub use labels::{Label, LabelSet};
pub use scalar::Scalar;

pub type TinyLm = lm::CausalLm<f32>;
pub type TrainedPrompt = prompt::PromptState<f32>;
pub type PromptClassifier = prompt::PromptedModel<f32>;
pub type EmbedClassifier = embed::EmbedModel<f32>;
