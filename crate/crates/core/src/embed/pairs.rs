//! Contrastive pair sampling, one label at a time.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EmbedError;
use crate::corpus::LabeledExample;
use crate::labels::Label;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub left: String,
    pub right: String,
    /// True when both texts have the same value for the label.
    pub similar: bool,
}

impl Pair {
    pub fn target(&self) -> f64 {
        if self.similar {
            1.0
        } else {
            0.0
        }
    }
}

/// `iterations` rounds, each emitting a positive pair (anchor and an example
/// agreeing on `label`) followed by a negative pair (anchor and an example
/// disagreeing). The positive partner is a different example whenever the
/// anchor's class has more than one member.
pub fn generate_pairs(
    train: &[LabeledExample],
    label: Label,
    iterations: usize,
    seed: u64,
) -> Result<Vec<Pair>, EmbedError> {
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| train[i].labels.get(label));
    if pos.is_empty() || neg.is_empty() {
        return Err(EmbedError::DegenerateLabel(label));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = |i: usize| train[i].article.body.clone();
    let mut out = Vec::with_capacity(2 * iterations);
    for _ in 0..iterations {
        let anchor = rng.random_range(0..train.len());
        let (same, other) = if train[anchor].labels.get(label) {
            (&pos, &neg)
        } else {
            (&neg, &pos)
        };
        let partner = if same.len() > 1 {
            loop {
                let j = *same.choose(&mut rng).unwrap();
                if j != anchor {
                    break j;
                }
            }
        } else {
            anchor
        };
        out.push(Pair {
            left: body(anchor),
            right: body(partner),
            similar: true,
        });
        out.push(Pair {
            left: body(anchor),
            right: body(*other.choose(&mut rng).unwrap()),
            similar: false,
        });
    }
    Ok(out)
}
