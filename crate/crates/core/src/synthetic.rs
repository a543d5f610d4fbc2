//! Small keyword-separable corpora for smoke tests and demos.
//!
//! Each body is filler words plus, depending on the example index, the
//! keyword `battle` (labelled `t_mil`) and/or `city` (labelled `t_loc`).
//! The other three labels are always false.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::article::{article_id, Article};
use crate::corpus::{Corpus, LabeledExample, Split};
use crate::labels::{Label, LabelSet};
use crate::lm::builtin::FILLER;

pub const MIL_KEYWORD: &str = "battle";
pub const LOC_KEYWORD: &str = "city";

/// `n` examples, all in the training split. Index `i` gets `battle` when
/// `i % 4` is 0 or 1 and `city` when it is 0 or 2.
pub fn separable_examples(n: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut words: Vec<&str> = (0..6).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
            let mut labels = LabelSet::EMPTY;
            if i % 4 < 2 {
                let at = rng.random_range(0..=words.len());
                words.insert(at, MIL_KEYWORD);
                labels.set(Label::Military, true);
            }
            if i % 4 == 0 || i % 4 == 2 {
                let at = rng.random_range(0..=words.len());
                words.insert(at, LOC_KEYWORD);
                labels.set(Label::Location, true);
            }
            let url = format!("https://synthetic.example/{seed}/{i}");
            LabeledExample {
                article: Article {
                    id: article_id(&url),
                    title: format!("synthetic {i}"),
                    url,
                    body: words.join(" "),
                    published_at: None,
                },
                labels,
                split: Split::Train,
            }
        })
        .collect()
}

pub fn separable_corpus(n: usize, seed: u64) -> Corpus {
    Corpus::new(separable_examples(n, seed)).expect("synthetic ids are unique")
}
