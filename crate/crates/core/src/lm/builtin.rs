//! Built-in base model: a tiny causal LM instruction-pretrained on a
//! synthetic multi-task mixture.
//!
//! Each pretraining sequence is an 8-token task instruction followed by an
//! input in the labelling format and the task's answer:
//!
//! * `classify` instruction: answer is the label string implied by a small
//!   conflict lexicon (`battle` ⇒ `t_mil`, `city` ⇒ `t_loc`, ...);
//! * `first` instruction: answer is the first word of the article text;
//! * any other 8 tokens (drawn from filler words): answer is empty.
//!
//! Prompt tuning from a neutral initial prompt therefore has to discover,
//! through the frozen network, a virtual prompt that selects the labelling
//! behaviour. The recipe is fully deterministic, so the weights are
//! reproducible bit-for-bit and are cached on disk after the first build.

use std::path::PathBuf;
use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{cross_entropy, CausalLm, LmConfig};
use super::store::{load_model, save_model};
use super::tokenizer::WordTokenizer;
use super::LmError;
use crate::labels::{Label, LabelSet, LABEL_NAMES};
use crate::optim::{linear_warmup_decay, AdamW};
use crate::prompt::{format_input, DEFAULT_INIT_TEXT};
use crate::scalar::Scalar;

pub const TINY_INSTRUCT: &str = "builtin:tiny-instruct";

/// Trigger words per label, canonical label order.
pub const LEXICON: [&[&str]; 5] = [
    &["battle", "clashes", "offensive", "airstrikes"],
    &["city", "town", "province", "village"],
    &["soldiers", "fighters"],
    &["civilians", "residents"],
    &["seized", "captured"],
];

pub const FILLER: &[&str] = &[
    "the",
    "a",
    "of",
    "in",
    "near",
    "on",
    "at",
    "people",
    "report",
    "said",
    "by",
    "from",
    "with",
    "after",
    "day",
    "week",
    "area",
    "officials",
    "local",
    "news",
    "today",
    "river",
    "market",
    "road",
    "north",
    "south",
    "group",
    "government",
    "media",
    "statement",
];

const TASK_WORDS: &[&str] = &["classify", "first", "tag", "word", "text", ":", "label", ",", "-"];
const PREFIX_LEN: usize = 8;

/// Pretraining hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub seed: u64,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub warmup: usize,
    pub weight_decay: f64,
}

impl Default for Recipe {
    fn default() -> Self {
        Recipe {
            seed: 0,
            hidden: 32,
            layers: 2,
            heads: 4,
            steps: 2000,
            batch: 8,
            lr: 3e-3,
            warmup: 100,
            weight_decay: 0.01,
        }
    }
}

impl Recipe {
    fn cache_key(&self) -> String {
        format!(
            "tiny-instruct-v2-s{}-d{}-l{}-h{}-n{}x{}-lr{}-w{}-wd{}",
            self.seed,
            self.hidden,
            self.layers,
            self.heads,
            self.steps,
            self.batch,
            self.lr,
            self.warmup,
            self.weight_decay
        )
    }
}

pub fn tokenizer() -> WordTokenizer {
    let mut words: Vec<String> = TASK_WORDS.iter().map(|s| s.to_string()).collect();
    words.extend(LABEL_NAMES.iter().map(|s| s.to_string()));
    words.extend(LEXICON.iter().flat_map(|l| l.iter().map(|s| s.to_string())));
    words.extend(FILLER.iter().map(|s| s.to_string()));
    words.extend(WordTokenizer::split_words(DEFAULT_INIT_TEXT).map(str::to_string));
    WordTokenizer::new(words, 32)
}

fn config(recipe: &Recipe, vocab: usize) -> LmConfig {
    LmConfig {
        vocab_size: vocab,
        hidden: recipe.hidden,
        layers: recipe.layers,
        heads: recipe.heads,
        mlp_hidden: 4 * recipe.hidden,
        // prefix + 256-token input + generated labels, with headroom
        max_positions: 320,
        layer_norm_eps: 1e-5,
    }
}

/// Labels implied by the lexicon for a whitespace-separated text.
pub fn lexicon_labels(text: &str) -> LabelSet {
    let words: Vec<String> = WordTokenizer::split_words(text).map(str::to_lowercase).collect();
    LabelSet::from_labels(
        Label::ALL
            .into_iter()
            .filter(|l| LEXICON[l.index()].iter().any(|k| words.iter().any(|w| w == k))),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Classify,
    FirstWord,
    Silent,
}

const CLASSIFY_PREFIX: &str = "classify : t_mil t_loc t_milcas t_civcas t_isis_vic tag";
const FIRST_PREFIX: &str = "first - first word of the text tag";

struct Sample {
    prefix: String,
    body: String,
    target: String,
}

fn sample<R: Rng>(rng: &mut R) -> Sample {
    let task = *[Task::Classify, Task::Classify, Task::FirstWord, Task::Silent]
        .choose(rng)
        .unwrap();
    let init_words: Vec<&str> = WordTokenizer::split_words(DEFAULT_INIT_TEXT).collect();
    let noise = |rng: &mut R| {
        if rng.random_bool(0.5) {
            *init_words.choose(rng).unwrap()
        } else {
            *FILLER.choose(rng).unwrap()
        }
    };
    let prefix = match task {
        Task::Classify => {
            // half the time, corrupt a few prefix tokens
            let mut words: Vec<&str> = WordTokenizer::split_words(CLASSIFY_PREFIX).collect();
            if rng.random_bool(0.5) {
                for _ in 0..rng.random_range(1..=3) {
                    let at = rng.random_range(0..words.len());
                    words[at] = noise(rng);
                }
            }
            words.join(" ")
        }
        Task::FirstWord => FIRST_PREFIX.to_string(),
        Task::Silent => (0..PREFIX_LEN).map(|_| noise(rng)).collect::<Vec<_>>().join(" "),
    };
    let n = rng.random_range(3..=9);
    let mut words: Vec<&str> = (0..n).map(|_| *FILLER.choose(rng).unwrap()).collect();
    let all_triggers: Vec<&str> = LEXICON.iter().flat_map(|l| l.iter().copied()).collect();
    let k = rng.random_range(0..=3);
    for w in all_triggers.choose_multiple(rng, k) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, w);
    }
    let body = words.join(" ");
    let target = match task {
        Task::Classify => lexicon_labels(&body).render(),
        Task::FirstWord => words[0].to_string(),
        Task::Silent => String::new(),
    };
    Sample { prefix, body, target }
}

/// Token ids and per-position targets (only the answer and end-of-sequence
/// are scored).
fn encode_sample(tok: &WordTokenizer, s: &Sample) -> (Vec<u32>, Vec<Option<u32>>) {
    let mut ids = tok.encode(&s.prefix);
    debug_assert_eq!(ids.len(), PREFIX_LEN);
    ids.extend(tok.encode(&format_input(&s.body)));
    let ctx = ids.len();
    ids.extend(tok.encode(&s.target));
    ids.push(tok.eos_id());
    let mut targets = vec![None; ids.len()];
    for p in ctx - 1..ids.len() - 1 {
        targets[p] = Some(ids[p + 1]);
    }
    (ids, targets)
}

pub fn pretrain<T: Scalar>(recipe: &Recipe) -> CausalLm<T> {
    let tok = tokenizer();
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut model = CausalLm::<T>::init(config(recipe, tok.vocab_size()), tok.clone(), &mut rng);
    let mut opt = AdamW::<T>::new(model.num_params(), recipe.lr, recipe.weight_decay);
    let mut grads = vec![T::zero(); model.num_params()];
    let inv_batch = T::one() / T::from_usize(recipe.batch).unwrap();
    for step in 0..recipe.steps {
        grads.fill(T::zero());
        for _ in 0..recipe.batch {
            let s = sample(&mut rng);
            let (ids, targets) = encode_sample(&tok, &s);
            let fwd = model.forward(&[], &ids);
            let (_, mut dlogits) = cross_entropy(&fwd.logits, model.config.vocab_size, &targets);
            dlogits.iter_mut().for_each(|g| *g *= inv_batch);
            model.backward(&fwd, &dlogits, Some(&mut grads));
        }
        // warmup counted from step 1 so the first update is not wasted
        let scale = linear_warmup_decay(step + 1, recipe.warmup, recipe.steps + 1);
        opt.step(model.params_mut(), &grads, T::lit(scale));
        if step % 500 == 0 {
            log::debug!("tiny-instruct pretraining step {step}/{}", recipe.steps);
        }
    }
    model
}

/// Greedy answer of the pretrained model for an instruction prefix and body.
pub fn answer<T: Scalar>(model: &CausalLm<T>, prefix: &str, body: &str, max_new: usize) -> String {
    let tok = &model.tokenizer;
    let mut ids = tok.encode(prefix);
    ids.extend(tok.encode(&format_input(body)));
    let ctx = ids.len();
    for _ in 0..max_new {
        let fwd = model.forward(&[], &ids);
        let next = super::model::argmax(fwd.logits_at(fwd.seq_len - 1, model.config.vocab_size));
        if next == tok.eos_id() {
            break;
        }
        ids.push(next);
    }
    tok.decode(&ids[ctx..])
}

/// Fraction of `n` fresh pretraining samples the model answers exactly.
pub fn task_accuracy<T: Scalar>(model: &CausalLm<T>, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..n)
        .filter(|_| {
            let s = sample(&mut rng);
            answer(model, &s.prefix, &s.body, 24) == s.target
        })
        .count();
    hits as f64 / n as f64
}

pub fn cache_dir() -> PathBuf {
    std::env::var_os("TCONTROL_MODEL_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tcontrol-models"))
}

static BUILD_LOCK: Mutex<()> = Mutex::new(());

/// Load the cached build of `recipe`, pretraining and caching it first if
/// needed. A cache entry whose checksum does not match its record is rebuilt.
pub fn load_or_pretrain<T: Scalar>(recipe: &Recipe) -> Result<CausalLm<T>, LmError> {
    let _guard = BUILD_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let dir = cache_dir().join(format!("{}-{:?}", recipe.cache_key(), T::DTYPE));
    let checksum_file = dir.join("checksum.txt");
    if let (Ok(model), Ok(expected)) = (load_model::<T>(&dir), std::fs::read_to_string(&checksum_file)) {
        if model.checksum() == expected.trim() {
            return Ok(model);
        }
        log::warn!("cached base model at {} is corrupt, rebuilding", dir.display());
    }
    log::info!("pretraining {TINY_INSTRUCT} (one-off, cached at {})", dir.display());
    let model = pretrain::<T>(recipe);
    let tmp = dir.with_extension(format!("tmp{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&tmp);
    save_model(&model, &tmp)?;
    std::fs::write(tmp.join("checksum.txt"), model.checksum())
        .map_err(|e| LmError::Io(tmp.display().to_string(), e))?;
    let _ = std::fs::remove_dir_all(&dir);
    if let Err(e) = std::fs::rename(&tmp, &dir) {
        // Another process may have won the race; its copy is equivalent.
        log::debug!("cache rename failed: {e}");
        let _ = std::fs::remove_dir_all(&tmp);
    }
    Ok(model)
}
