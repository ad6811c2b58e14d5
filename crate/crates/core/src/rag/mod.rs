//! Retrieval over chunked specifications: chunking, embedding, an exact
//! vector store and result aggregation.

mod chunk;
mod embed;
mod store;

use thiserror::Error;

pub use chunk::{chunk_id, chunk_text, Chunk, ChunkBounds, DEFAULT_MAX_TOKENS, DEFAULT_MIN_TOKENS};
pub use embed::{
    dot, embed, EmbeddingProvider, EmbeddingVector, HashingEmbedder, HttpEmbedder, HASHING_DIM, HASHING_PROVIDER_ID,
};
pub use store::{
    aggregate, index, index_with, rank_order, ScoredChunk, StoreEntry, VectorStore, STORE_FORMAT, STORE_VERSION,
};

/// Default number of hits requested per query variant.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid chunk bounds: min {min} must be positive and below max {max}")]
    InvalidBounds { min: usize, max: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding provider returned a zero or non-finite vector ({0})")]
    DegenerateVector(String),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("duplicate chunk id `{0}`")]
    DuplicateChunkId(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt vector store: {0}")]
    CorruptStore(String),
    #[error("vector store encoding: {0}")]
    Encoding(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
