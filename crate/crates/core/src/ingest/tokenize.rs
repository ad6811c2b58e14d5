//! Token counting behind a pluggable tokenizer interface.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::IngestError;

/// Identifier of the built-in approximate tokenizer.
pub const APPROX_TOKENIZER_ID: &str = "approx-chars4";

/// Identifier of the cl100k BPE tokenizer (requires the `tiktoken` feature).
pub const CL100K_TOKENIZER_ID: &str = "cl100k_base";

/// Counts tokens in text.
///
/// Implementations must be deterministic, return 0 for empty text, and be
/// monotone over prefixes: a longer prefix of the same text never counts
/// fewer tokens. The chunker relies on that last property to binary-search
/// hard split points.
pub trait Tokenizer: Send + Sync {
    fn id(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

/// `ceil(chars / 4)` per whitespace-separated word, summed.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenizer;

impl Tokenizer for ApproxTokenizer {
    fn id(&self) -> &str {
        APPROX_TOKENIZER_ID
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().map(|word| word.chars().count().div_ceil(4)).sum()
    }
}

#[cfg(feature = "tiktoken")]
pub struct Cl100kTokenizer {
    bpe: tiktoken_rs::CoreBPE,
}

#[cfg(feature = "tiktoken")]
impl Cl100kTokenizer {
    pub fn new() -> Result<Self, IngestError> {
        let bpe = tiktoken_rs::cl100k_base()
            .map_err(|e| IngestError::TokenizerInit { id: CL100K_TOKENIZER_ID.to_string(), message: e.to_string() })?;
        Ok(Self { bpe })
    }
}

#[cfg(feature = "tiktoken")]
impl Tokenizer for Cl100kTokenizer {
    fn id(&self) -> &str {
        CL100K_TOKENIZER_ID
    }

    fn count(&self, text: &str) -> usize {
        self.bpe.encode_ordinary(text).len()
    }
}

/// A token count tagged with the tokenizer that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCount {
    pub count: usize,
    pub tokenizer_id: String,
}

/// Lookup table of tokenizers by id.
#[derive(Clone)]
pub struct TokenizerRegistry {
    tokenizers: BTreeMap<String, Arc<dyn Tokenizer>>,
}

impl Default for TokenizerRegistry {
    fn default() -> Self {
        let mut registry = Self { tokenizers: BTreeMap::new() };
        registry.register(Arc::new(ApproxTokenizer));
        registry
    }
}

impl TokenizerRegistry {
    pub fn register(&mut self, tokenizer: Arc<dyn Tokenizer>) {
        self.tokenizers.insert(tokenizer.id().to_string(), tokenizer);
    }

    /// Resolve a tokenizer. `cl100k_base` is instantiated lazily when the
    /// `tiktoken` feature is enabled.
    pub fn get(&self, id: &str) -> Result<Arc<dyn Tokenizer>, IngestError> {
        if let Some(t) = self.tokenizers.get(id) {
            return Ok(Arc::clone(t));
        }
        #[cfg(feature = "tiktoken")]
        if id == CL100K_TOKENIZER_ID {
            return Ok(Arc::new(Cl100kTokenizer::new()?));
        }
        Err(IngestError::UnknownTokenizer(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tokenizers.keys().map(String::as_str)
    }
}

pub fn count_tokens(text: &str, tokenizer: &dyn Tokenizer) -> TokenCount {
    TokenCount { count: tokenizer.count(text), tokenizer_id: tokenizer.id().to_string() }
}
