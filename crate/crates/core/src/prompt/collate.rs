//! Tokenisation, left padding and loss masking for one training example.

use super::{split_formatted_input, PromptError};
use crate::lm::WordTokenizer;

/// Loss-target value for positions that do not contribute to the loss.
pub const IGNORE_INDEX: i64 = -100;

/// One example, right-aligned in a `max_len` window.
///
/// `labels[i]` is the token expected at position `i` (the model predicts it
/// from position `i - 1`), or [`IGNORE_INDEX`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollatedBatch {
    pub input_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub labels: Vec<i64>,
}

impl CollatedBatch {
    pub fn max_len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn pad_len(&self) -> usize {
        self.attention_mask.iter().take_while(|&&m| m == 0).count()
    }

    pub fn content_len(&self) -> usize {
        self.max_len() - self.pad_len()
    }

    /// Number of positions that carry a real loss target.
    pub fn target_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_INDEX).count()
    }

    /// Non-padding token ids, in order.
    pub fn content_ids(&self) -> Vec<u32> {
        self.input_ids
            .iter()
            .zip(&self.attention_mask)
            .filter(|(_, &m)| m == 1)
            .map(|(&id, _)| id)
            .collect()
    }

    /// Loss targets over the non-padding positions.
    pub fn content_labels(&self) -> Vec<i64> {
        self.labels
            .iter()
            .zip(&self.attention_mask)
            .filter(|(_, &m)| m == 1)
            .map(|(&l, _)| l)
            .collect()
    }
}

/// Token segments of a formatted input: `text :` head, article body, and the
/// `Label :` marker. Inputs not in the standard format are all body.
pub(crate) struct InputTokens {
    pub head: Vec<u32>,
    pub body: Vec<u32>,
    pub marker: Vec<u32>,
}

impl InputTokens {
    pub fn new(tok: &WordTokenizer, input_text: &str) -> Self {
        match split_formatted_input(input_text) {
            Some((head, body, marker)) => InputTokens {
                head: tok.encode(head),
                body: tok.encode(body),
                marker: tok.encode(marker),
            },
            None => InputTokens {
                head: Vec::new(),
                body: tok.encode(input_text),
                marker: Vec::new(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.head.len() + self.body.len() + self.marker.len()
    }

    /// Drop `n` tokens from the left of the body, then from the head if the
    /// body runs out. The marker is never touched.
    pub fn truncate_left(&mut self, n: usize) {
        let from_body = n.min(self.body.len());
        self.body.drain(..from_body);
        let from_head = (n - from_body).min(self.head.len());
        self.head.drain(..from_head);
    }

    pub fn into_ids(self) -> Vec<u32> {
        let mut ids = self.head;
        ids.extend(self.body);
        ids.extend(self.marker);
        ids
    }
}

/// Tokenise `input_text` and `target_text` (plus end-of-sequence), truncate
/// the article from the left if the pair exceeds `max_len`, and left-pad.
/// Only the target tokens carry loss targets.
pub fn collate(
    tok: &WordTokenizer,
    input_text: &str,
    target_text: &str,
    max_len: usize,
) -> Result<CollatedBatch, PromptError> {
    let mut input = InputTokens::new(tok, input_text);
    let mut target = tok.encode(target_text);
    target.push(tok.eos_id());
    if target.len() + input.marker.len() > max_len {
        return Err(PromptError::TargetTooLong {
            target_tokens: target.len(),
            max_len,
        });
    }
    let overflow = (input.len() + target.len()).saturating_sub(max_len);
    input.truncate_left(overflow);
    let input_ids = input.into_ids();
    let content = input_ids.len() + target.len();
    let pad = max_len - content;

    let mut ids = vec![tok.pad_id(); pad];
    ids.extend(&input_ids);
    ids.extend(&target);
    let mut mask = vec![0u8; pad];
    mask.resize(max_len, 1);
    let mut labels = vec![IGNORE_INDEX; pad + input_ids.len()];
    labels.extend(target.iter().map(|&t| i64::from(t)));
    Ok(CollatedBatch {
        input_ids: ids,
        attention_mask: mask,
        labels,
    })
}
