//! Tokenisation and vocabulary handling.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::Result;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token → id map. Ids 0/1 are reserved for PAD/UNK; the rest are assigned
/// to the sorted unique training tokens so construction is deterministic.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocab {
    /// Build from training transcriptions (every token kept, min frequency 1).
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut uniq: BTreeMap<String, ()> = BTreeMap::new();
        for text in texts {
            for tok in normalize_tokens(text) {
                uniq.entry(tok).or_insert(());
            }
        }
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        tokens.extend(uniq.into_keys());
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Content words (excluding PAD/UNK), e.g. as a substitution pool.
    pub fn words(&self) -> &[String] {
        &self.tokens[2..]
    }

    /// Hash of the token list, used to invalidate feature caches.
    pub fn fingerprint(&self) -> String {
        use sha2::Digest;
        let mut h = sha2::Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, serde_json::to_string_pretty(&self.tokens)?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let tokens: Vec<String> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(Self::from_tokens(tokens))
    }
}

/// Fixed-length token-id view of a transcription. The embedding matrix lives
/// in the model; this carries ids and the true length only.
#[derive(Clone, Debug, PartialEq)]
pub struct TextFeature {
    pub token_ids: Vec<usize>,
    pub length: usize,
}

/// Lowercase, strip punctuation (keeping word-internal apostrophes), split on
/// whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|w| {
            let cleaned: String = w
                .chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(|c| c.to_lowercase())
                .collect();
            let cleaned = cleaned.trim_matches('\'').to_string();
            if cleaned.is_empty() {
                None
            } else {
                Some(cleaned)
            }
        })
        .collect()
}

/// Map a transcription to ids, truncated/padded to `l_max`.
pub fn tokenize(text: &str, vocab: &Vocab, l_max: usize) -> TextFeature {
    let mut ids: Vec<usize> = normalize_tokens(text).iter().map(|t| vocab.id(t)).collect();
    if ids.is_empty() {
        eprintln!("warning: empty transcription {text:?}; emitting a single unknown token");
        ids.push(UNK_ID);
    }
    ids.truncate(l_max);
    let length = ids.len();
    ids.resize(l_max, PAD_ID);
    TextFeature { token_ids: ids, length }
}
