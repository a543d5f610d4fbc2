//! Optimisation of the virtual-token embeddings against a frozen model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::collate::{collate, CollatedBatch, IGNORE_INDEX};
use super::state::PromptState;
use super::{build_input, PromptError, PromptTuneConfig};
use crate::corpus::{Corpus, LabeledExample};
use crate::lm::{cross_entropy, resolve_model, CausalLm, Forward};
use crate::optim::{linear_warmup_decay, warmup_steps, AdamW};
use crate::scalar::Scalar;

/// Result of a prompt-tuning run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub state: PromptState<T>,
    /// Mean batch loss at each optimisation step.
    pub step_losses: Vec<f64>,
    pub base_checksum_before: String,
    pub base_checksum_after: String,
}

/// Embedding rows of the first `n` tokens of `init_text`, repeated if the
/// text is shorter than `n` tokens.
pub fn initial_prompt<T: Scalar>(model: &CausalLm<T>, init_text: &str, n: usize) -> Result<Vec<T>, PromptError> {
    let ids = model.tokenizer.encode(init_text);
    if ids.is_empty() {
        return Err(PromptError::InvalidConfig("init_text has no tokens".into()));
    }
    let mut out = Vec::with_capacity(n * model.config.hidden);
    for &id in ids.iter().cycle().take(n) {
        out.extend_from_slice(model.token_embedding(id));
    }
    Ok(out)
}

/// Per-position targets for `[prompt rows, content tokens]`: the label of
/// content position `r` is predicted from the position before it.
fn targets(n_prefix: usize, batch: &CollatedBatch) -> (Vec<u32>, Vec<Option<u32>>) {
    let ids = batch.content_ids();
    let labels = batch.content_labels();
    let mut t = vec![None; n_prefix + ids.len()];
    for (r, &l) in labels.iter().enumerate() {
        if l == IGNORE_INDEX {
            continue;
        }
        let pos = (n_prefix + r)
            .checked_sub(1)
            .expect("first position has no predecessor to predict it");
        t[pos] = Some(l as u32);
    }
    (ids, t)
}

/// Padding positions are masked out of attention and do not consume
/// position ids, so they are dropped before the forward pass.
fn run<T: Scalar>(model: &CausalLm<T>, prompt: &[T], batch: &CollatedBatch) -> (Forward<T>, T, Vec<T>) {
    let n_prefix = prompt.len() / model.config.hidden;
    let (ids, t) = targets(n_prefix, batch);
    let fwd = model.forward(prompt, &ids);
    let (loss, dlogits) = cross_entropy(&fwd.logits, model.config.vocab_size, &t);
    (fwd, loss, dlogits)
}

/// Mean cross-entropy over the label tokens of one example.
pub fn sequence_loss<T: Scalar>(model: &CausalLm<T>, prompt: &[T], batch: &CollatedBatch) -> T {
    run(model, prompt, batch).1
}

/// Token-weighted mean loss over several examples.
pub fn dataset_loss<T: Scalar>(model: &CausalLm<T>, prompt: &[T], batches: &[CollatedBatch]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for b in batches {
        let n = b.target_count();
        total += sequence_loss(model, prompt, b).as_f64() * n as f64;
        count += n;
    }
    total / count.max(1) as f64
}

pub fn collate_examples<T: Scalar>(
    model: &CausalLm<T>,
    examples: &[LabeledExample],
    max_len: usize,
) -> Result<Vec<CollatedBatch>, PromptError> {
    examples
        .iter()
        .map(|ex| {
            let (input, target) = build_input(ex);
            collate(&model.tokenizer, &input, &target, max_len)
        })
        .collect()
}

pub(crate) fn check_budget<T: Scalar>(model: &CausalLm<T>, config: &PromptTuneConfig) -> Result<(), PromptError> {
    let need = config.num_virtual_tokens + config.max_input_tokens + config.max_new_tokens;
    if need > model.config.max_positions {
        return Err(PromptError::InvalidConfig(format!(
            "{} virtual + {} input + {} generated tokens exceed the model's {} positions",
            config.num_virtual_tokens, config.max_input_tokens, config.max_new_tokens, model.config.max_positions
        )));
    }
    Ok(())
}

/// Resolve `config.model_id` and tune a prompt on the corpus' training split.
pub fn train_prompt<T: Scalar>(corpus: &Corpus, config: &PromptTuneConfig) -> Result<TrainOutcome<T>, PromptError> {
    config.validate()?;
    let train: Vec<LabeledExample> = corpus.train().cloned().collect();
    if train.is_empty() {
        return Err(PromptError::EmptyTrainSplit);
    }
    let model = resolve_model::<T>(&config.model_id)?;
    train_prompt_with_model(&model, &train, config)
}

/// Tune a prompt for an already loaded model. The model is only read.
pub fn train_prompt_with_model<T: Scalar>(
    model: &CausalLm<T>,
    train: &[LabeledExample],
    config: &PromptTuneConfig,
) -> Result<TrainOutcome<T>, PromptError> {
    config.validate()?;
    check_budget(model, config)?;
    if train.is_empty() {
        return Err(PromptError::EmptyTrainSplit);
    }
    let before = model.checksum();
    let batches = collate_examples(model, train, config.max_input_tokens)?;
    let mut prompt = initial_prompt(model, &config.init_text, config.num_virtual_tokens)?;

    let per_epoch = batches.len().div_ceil(config.batch_size);
    let total = config.max_steps.unwrap_or(config.epochs * per_epoch);
    let warmup = warmup_steps(config.warmup, total);
    let mut opt = AdamW::<T>::new(prompt.len(), config.learning_rate, config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut step_losses = Vec::with_capacity(total);
    let mut grad = vec![T::zero(); prompt.len()];

    for step in 0..total {
        if cursor >= order.len() {
            order = (0..batches.len()).collect();
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let members = &order[cursor..end];
        cursor = end;

        let total_targets: usize = members.iter().map(|&i| batches[i].target_count()).sum();
        grad.fill(T::zero());
        let mut loss = 0.0;
        for &i in members {
            let (fwd, l, mut dlogits) = run(model, &prompt, &batches[i]);
            let w = batches[i].target_count() as f64 / total_targets as f64;
            loss += l.as_f64() * w;
            let wt = T::lit(w);
            dlogits.iter_mut().for_each(|g| *g *= wt);
            let dprompt = model.backward(&fwd, &dlogits, None);
            grad.iter_mut().zip(&dprompt).for_each(|(g, &d)| *g += d);
        }
        let scale = linear_warmup_decay(step, warmup, total);
        opt.step(&mut prompt, &grad, T::lit(scale));
        step_losses.push(loss);
        log::debug!("prompt step {}/{total}: loss {loss:.4}", step + 1);
    }

    let after = model.checksum();
    Ok(TrainOutcome {
        state: PromptState::new(config.clone(), model.config.hidden, prompt, before.clone()),
        step_losses,
        base_checksum_before: before,
        base_checksum_after: after,
    })
}
