//! Hashed bag-of-words sentence encoder.
//!
//! `embed(text) = normalize(W · mean_j E[hash(word_j)] + b)`. With the dense
//! layer at identity this is a random-indexing encoder: texts sharing words
//! have correlated embeddings before any tuning.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::lm::tokenizer::fnv1a;
use crate::lm::WordTokenizer;
use crate::scalar::Scalar;

pub const HASHED_BOW: &str = "builtin:hashed-bow";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub buckets: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            buckets: 4096,
            dim: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashedEncoder<T: Scalar> {
    pub config: EncoderConfig,
    /// `buckets × dim`, then `dim × dim` dense weight, then `dim` bias.
    pub params: Vec<T>,
}

/// Intermediate values kept for the backward pass.
pub struct Encoded<T> {
    buckets: Vec<usize>,
    pooled: Vec<T>,
    raw: Vec<T>,
    /// Unit-length embedding (all zeros for a text with no tokens).
    pub embedding: Vec<T>,
}

impl<T: Scalar> HashedEncoder<T> {
    pub fn new(config: EncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.dim;
        let mut params = Vec::with_capacity(config.buckets * d + d * d + d);
        for _ in 0..config.buckets * d {
            let z: f64 = StandardNormal.sample(&mut rng);
            params.push(T::lit(z));
        }
        for i in 0..d {
            for j in 0..d {
                params.push(if i == j { T::one() } else { T::zero() });
            }
        }
        params.resize(params.len() + d, T::zero());
        HashedEncoder { config, params }
    }

    pub fn from_parts(config: EncoderConfig, params: Vec<T>) -> Result<Self, String> {
        let want = Self::param_count(&config);
        if params.len() != want {
            return Err(format!("expected {want} encoder parameters, got {}", params.len()));
        }
        Ok(HashedEncoder { config, params })
    }

    pub fn param_count(c: &EncoderConfig) -> usize {
        c.buckets * c.dim + c.dim * c.dim + c.dim
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub(crate) fn split(&self) -> (&[T], &[T], &[T]) {
        let e = self.config.buckets * self.config.dim;
        let w = e + self.config.dim * self.config.dim;
        (&self.params[..e], &self.params[e..w], &self.params[w..])
    }

    fn bucket(&self, word: &str) -> usize {
        (fnv1a(word.to_lowercase().as_bytes()) % self.config.buckets as u64) as usize
    }

    pub fn forward(&self, text: &str) -> Encoded<T> {
        let d = self.config.dim;
        let (table, w, b) = self.split();
        let buckets: Vec<usize> = WordTokenizer::split_words(text).map(|t| self.bucket(t)).collect();
        let mut pooled = vec![T::zero(); d];
        if !buckets.is_empty() {
            let inv = T::one() / T::from_usize(buckets.len()).unwrap();
            for &k in &buckets {
                for (p, &e) in pooled.iter_mut().zip(&table[k * d..(k + 1) * d]) {
                    *p += e * inv;
                }
            }
        }
        let raw: Vec<T> = if buckets.is_empty() {
            vec![T::zero(); d]
        } else {
            (0..d)
                .map(|i| {
                    b[i] + w[i * d..(i + 1) * d]
                        .iter()
                        .zip(&pooled)
                        .map(|(&a, &x)| a * x)
                        .sum::<T>()
                })
                .collect()
        };
        let norm = raw.iter().map(|&x| x * x).sum::<T>().sqrt();
        let embedding = if norm > T::zero() {
            raw.iter().map(|&x| x / norm).collect()
        } else {
            vec![T::zero(); d]
        };
        Encoded {
            buckets,
            pooled,
            raw,
            embedding,
        }
    }

    pub fn embed(&self, text: &str) -> Vec<T> {
        self.forward(text).embedding
    }

    /// Accumulate into `grads` the gradient flowing from `draw`, the loss
    /// gradient with respect to the pre-normalisation vector.
    pub(crate) fn backward(&self, enc: &Encoded<T>, draw: &[T], grads: &mut [T]) {
        if enc.buckets.is_empty() {
            return;
        }
        let d = self.config.dim;
        let e_len = self.config.buckets * d;
        let (_, w, _) = self.split();
        let (g_table, rest) = grads.split_at_mut(e_len);
        let (g_w, g_b) = rest.split_at_mut(d * d);
        let mut dpooled = vec![T::zero(); d];
        for i in 0..d {
            g_b[i] += draw[i];
            for j in 0..d {
                g_w[i * d + j] += draw[i] * enc.pooled[j];
                dpooled[j] += w[i * d + j] * draw[i];
            }
        }
        let inv = T::one() / T::from_usize(enc.buckets.len()).unwrap();
        for &k in &enc.buckets {
            for (g, &dp) in g_table[k * d..(k + 1) * d].iter_mut().zip(&dpooled) {
                *g += dp * inv;
            }
        }
    }
}

/// Cosine similarity of two raw vectors and its gradients with respect to
/// each. Zero vectors have similarity 0 and zero gradient.
pub(crate) fn cosine_with_grad<T: Scalar>(u: &[T], v: &[T]) -> (T, Vec<T>, Vec<T>) {
    let nu = u.iter().map(|&x| x * x).sum::<T>().sqrt();
    let nv = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if nu == T::zero() || nv == T::zero() {
        return (T::zero(), vec![T::zero(); u.len()], vec![T::zero(); v.len()]);
    }
    let dot: T = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    let cos = dot / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| b / (nu * nv) - cos * a / (nu * nu))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(&a, &b)| a / (nu * nv) - cos * b / (nv * nv))
        .collect();
    (cos, du, dv)
}

/// Squared error between cosine similarity of the two texts and `target`;
/// gradients are added into `grads`, scaled by `weight`.
pub(crate) fn pair_loss<T: Scalar>(
    enc: &HashedEncoder<T>,
    left: &str,
    right: &str,
    target: T,
    weight: T,
    grads: &mut [T],
) -> T {
    let a = enc.forward(left);
    let b = enc.forward(right);
    let (cos, du, dv) = cosine_with_grad(&a.raw, &b.raw);
    let err = cos - target;
    let scale = weight * T::lit(2.0) * err;
    let du: Vec<T> = du.into_iter().map(|g| g * scale).collect();
    let dv: Vec<T> = dv.into_iter().map(|g| g * scale).collect();
    enc.backward(&a, &du, grads);
    enc.backward(&b, &dv, grads);
    err * err
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> HashedEncoder<f64> {
        let mut e = HashedEncoder::new(EncoderConfig {
            buckets: 32,
            dim: 6,
            seed: 4,
        });
        // move the dense layer off identity so its gradient is exercised
        let n = e.params.len();
        for (i, p) in e.params[32 * 6..n].iter_mut().enumerate() {
            *p += 0.1 * ((i * 7 % 11) as f64 - 5.0) / 5.0;
        }
        e
    }

    #[test]
    fn embeddings_are_unit_length_and_deterministic() {
        let e = HashedEncoder::<f32>::new(EncoderConfig::default());
        let v = e.embed("battle near the river");
        let n: f32 = v.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-5);
        assert_eq!(v, e.embed("battle near the river"));
        assert_eq!(v, e.embed("Battle near the RIVER"));
        assert!(e.embed("").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pair_gradient_matches_finite_differences() {
        let e = small();
        let (l, r) = ("battle near the city", "the city market");
        let mut g = vec![0.0; e.params.len()];
        pair_loss(&e, l, r, 0.0, 1.0, &mut g);
        let h = 1e-6;
        let mut checked = 0;
        for (i, &gi) in g.iter().enumerate() {
            let mut p = e.clone();
            p.params[i] += h;
            let up = pair_loss(&p, l, r, 0.0, 1.0, &mut vec![0.0; e.params.len()]);
            p.params[i] -= 2.0 * h;
            let down = pair_loss(&p, l, r, 0.0, 1.0, &mut vec![0.0; e.params.len()]);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - gi).abs() < 1e-6, "param {i}: fd {fd} vs {gi}");
            if gi != 0.0 {
                checked += 1;
            }
        }
        assert!(checked > 40);
    }
}
