//! Word-level tokenizer with hashed buckets for out-of-vocabulary words.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const PAD: &str = "<pad>";
pub const EOS: &str = "<eos>";

fn word_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\w]+|[^\w\s]").expect("valid regex"))
}

/// FNV-1a, 64-bit. Stable across platforms and releases, unlike `DefaultHasher`.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Splits into `\w+` runs and single punctuation characters. Lookup is
/// case-insensitive; unknown words map to one of `unk_buckets` hash buckets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TokenizerFile", try_from = "TokenizerFile")]
pub struct WordTokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    unk_buckets: u32,
}

#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    vocab: Vec<String>,
    unk_buckets: u32,
}

impl From<WordTokenizer> for TokenizerFile {
    fn from(t: WordTokenizer) -> Self {
        TokenizerFile {
            vocab: t.vocab,
            unk_buckets: t.unk_buckets,
        }
    }
}

impl TryFrom<TokenizerFile> for WordTokenizer {
    type Error = String;

    fn try_from(f: TokenizerFile) -> Result<Self, Self::Error> {
        let expected_prefix = Self::special_tokens(f.unk_buckets);
        if f.vocab.len() < expected_prefix.len() || f.vocab[..expected_prefix.len()] != expected_prefix[..] {
            return Err("vocabulary does not start with the special tokens".into());
        }
        let words = f.vocab[expected_prefix.len()..].to_vec();
        Ok(WordTokenizer::new(words, f.unk_buckets))
    }
}

impl WordTokenizer {
    fn special_tokens(unk_buckets: u32) -> Vec<String> {
        let mut v = vec![PAD.to_string(), EOS.to_string()];
        v.extend((0..unk_buckets).map(|i| format!("<unk_{i}>")));
        v
    }

    /// Words are lowercased and deduplicated, keeping first occurrence.
    pub fn new<I, S>(words: I, unk_buckets: u32) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        assert!(unk_buckets > 0, "need at least one unknown-word bucket");
        let mut vocab = Self::special_tokens(unk_buckets);
        let mut index: HashMap<String, u32> = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        for w in words {
            let w = w.as_ref().to_lowercase();
            if !index.contains_key(&w) {
                index.insert(w.clone(), vocab.len() as u32);
                vocab.push(w);
            }
        }
        WordTokenizer {
            vocab,
            index,
            unk_buckets,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn pad_id(&self) -> u32 {
        0
    }

    pub fn eos_id(&self) -> u32 {
        1
    }

    pub fn is_special(&self, id: u32) -> bool {
        id < 2 + self.unk_buckets
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(&word.to_lowercase()).copied()
    }

    pub fn split_words(text: &str) -> impl Iterator<Item = &str> {
        word_pattern().find_iter(text).map(|m| m.as_str())
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        Self::split_words(text)
            .map(|w| {
                let lower = w.to_lowercase();
                self.index
                    .get(&lower)
                    .copied()
                    .unwrap_or_else(|| 2 + (fnv1a(lower.as_bytes()) % u64::from(self.unk_buckets)) as u32)
            })
            .collect()
    }

    /// Space-joined tokens, with no space before `, . ; ! ?`. Stops at the
    /// first end-of-sequence token and skips padding.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == self.eos_id() {
                break;
            }
            if id == self.pad_id() {
                continue;
            }
            let tok = self.token(id).unwrap_or("<invalid>");
            let attach = matches!(tok, "," | "." | ";" | "!" | "?");
            if !out.is_empty() && !attach {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }
}
