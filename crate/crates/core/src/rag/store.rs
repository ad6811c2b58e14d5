//! Exact full-scan vector store.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chunk::Chunk;
use super::embed::{dot, embed, EmbeddingProvider, EmbeddingVector};
use super::RagError;
use crate::par::{self, Execution};

pub const STORE_FORMAT: &str = "specprobe-vector-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub chunk: Chunk,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: usize,
    provider_id: String,
    entries: Vec<StoreEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: Chunk,
    pub score: f32,
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    format: String,
    version: u32,
    dim: usize,
    provider_id: String,
    entry_count: usize,
}

/// Descending score, ascending id.
pub fn rank_order(a_score: f32, a_id: &str, b_score: f32, b_id: &str) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

impl VectorStore {
    pub fn from_entries(
        dim: usize,
        provider_id: impl Into<String>,
        entries: Vec<StoreEntry>,
    ) -> Result<Self, RagError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.vector.len() != dim {
                return Err(RagError::DimensionMismatch { expected: dim, actual: e.vector.len() });
            }
            if !seen.insert(e.chunk.id.as_str()) {
                return Err(RagError::DuplicateChunkId(e.chunk.id.clone()));
            }
        }
        Ok(Self { dim, provider_id: provider_id.into(), entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    /// The `k` most similar entries by (score desc, id asc).
    pub fn query(&self, vector: &EmbeddingVector, k: usize) -> Result<Vec<ScoredChunk>, RagError> {
        self.query_with(vector, k, Execution::default())
    }

    pub fn query_with(
        &self,
        vector: &EmbeddingVector,
        k: usize,
        exec: Execution,
    ) -> Result<Vec<ScoredChunk>, RagError> {
        if vector.values.len() != self.dim {
            return Err(RagError::DimensionMismatch { expected: self.dim, actual: vector.values.len() });
        }
        if k == 0 {
            return Err(RagError::InvalidK);
        }
        let scores = par::map(&self.entries, exec, |e| dot(&vector.values, &e.vector));
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        let cmp = |&a: &usize, &b: &usize| {
            rank_order(scores[a], &self.entries[a].chunk.id, scores[b], &self.entries[b].chunk.id)
        };
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(cmp);
        Ok(order.into_iter().map(|i| ScoredChunk { chunk: self.entries[i].chunk.clone(), score: scores[i] }).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), RagError> {
        let io = |source| RagError::Io { path: path.display().to_string(), source };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = BufWriter::new(file);
        let header = StoreHeader {
            format: STORE_FORMAT.into(),
            version: STORE_VERSION,
            dim: self.dim,
            provider_id: self.provider_id.clone(),
            entry_count: self.entries.len(),
        };
        serde_json::to_writer(&mut w, &header).map_err(RagError::from)?;
        w.write_all(b"\n").map_err(io)?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e).map_err(RagError::from)?;
            w.write_all(b"\n").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, RagError> {
        let io = |source| RagError::Io { path: path.display().to_string(), source };
        let file = std::fs::File::open(path).map_err(io)?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines.next().ok_or_else(|| RagError::CorruptStore("missing header".into()))?.map_err(io)?;
        let header: StoreHeader = serde_json::from_str(&header_line)?;
        if header.format != STORE_FORMAT || header.version != STORE_VERSION {
            return Err(RagError::CorruptStore(format!("unsupported store {} v{}", header.format, header.version)));
        }
        let mut entries = Vec::with_capacity(header.entry_count);
        for line in lines {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str::<StoreEntry>(&line)?);
        }
        if entries.len() != header.entry_count {
            return Err(RagError::CorruptStore(format!(
                "header declares {} entries, found {}",
                header.entry_count,
                entries.len()
            )));
        }
        Self::from_entries(header.dim, header.provider_id, entries)
    }
}

/// Embed every chunk and build a store.
pub fn index(chunks: Vec<Chunk>, provider: &dyn EmbeddingProvider) -> Result<VectorStore, RagError> {
    index_with(chunks, provider, Execution::default())
}

pub fn index_with(
    chunks: Vec<Chunk>,
    provider: &dyn EmbeddingProvider,
    exec: Execution,
) -> Result<VectorStore, RagError> {
    if chunks.is_empty() {
        return Err(RagError::EmptyInput);
    }
    let mut seen = BTreeSet::new();
    for c in &chunks {
        if !seen.insert(c.id.as_str()) {
            return Err(RagError::DuplicateChunkId(c.id.clone()));
        }
    }
    let vectors = par::try_map(&chunks, exec, |c| embed(&c.text, provider))?;
    let entries = chunks.into_iter().zip(vectors).map(|(chunk, v)| StoreEntry { chunk, vector: v.values }).collect();
    VectorStore::from_entries(provider.dim(), provider.id(), entries)
}

/// Union of result sets, deduplicated by chunk id and ordered by each
/// chunk's best score (desc, id asc).
pub fn aggregate(result_sets: &[Vec<ScoredChunk>]) -> Vec<ScoredChunk> {
    let mut best: BTreeMap<&str, &ScoredChunk> = BTreeMap::new();
    for hit in result_sets.iter().flatten() {
        best.entry(hit.chunk.id.as_str())
            .and_modify(|cur| {
                if hit.score > cur.score {
                    *cur = hit;
                }
            })
            .or_insert(hit);
    }
    let mut out: Vec<ScoredChunk> = best.into_values().cloned().collect();
    out.sort_by(|a, b| rank_order(a.score, &a.chunk.id, b.score, &b.chunk.id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rag::HashingEmbedder;

    fn chunk(id: &str) -> Chunk {
        Chunk { id: id.into(), text: format!("text of {id}"), token_count: 3, anchor: String::new() }
    }

    fn unit(dim: usize, i: usize) -> Vec<f32> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    fn scored(id: &str, score: f32) -> ScoredChunk {
        ScoredChunk { chunk: chunk(id), score }
    }

    #[test]
    fn orthogonal_query_hits_itself() {
        let entries = (0..3).map(|i| StoreEntry { chunk: chunk(&format!("c{i}")), vector: unit(3, i) }).collect();
        let store = VectorStore::from_entries(3, "t", entries).unwrap();
        let q = EmbeddingVector { values: unit(3, 1), dim: 3, provider_id: "t".into() };
        let hits = store.query(&q, 1).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].chunk.id, "c1");
        assert_eq!(hits[0].score, 1.0);
        // k past the end returns the whole store, ties broken by id
        let all = store.query(&q, 10).unwrap();
        let ids: Vec<_> = all.iter().map(|h| h.chunk.id.as_str()).collect();
        assert_eq!(ids, ["c1", "c0", "c2"]);
    }

    #[test]
    fn query_errors() {
        let store = index(vec![chunk("a")], &HashingEmbedder).unwrap();
        let q = EmbeddingVector { values: vec![1.0; 3], dim: 3, provider_id: "t".into() };
        assert!(matches!(store.query(&q, 1), Err(RagError::DimensionMismatch { .. })));
        let q = embed("a", &HashingEmbedder).unwrap();
        assert!(matches!(store.query(&q, 0), Err(RagError::InvalidK)));
    }

    #[test]
    fn index_cardinality_and_duplicates() {
        let chunks: Vec<_> = (0..10).map(|i| chunk(&format!("c{i}"))).collect();
        assert_eq!(index(chunks, &HashingEmbedder).unwrap().len(), 10);
        let err = index(vec![chunk("a"), chunk("a")], &HashingEmbedder).unwrap_err();
        assert!(matches!(err, RagError::DuplicateChunkId(id) if id == "a"));
        assert!(matches!(index(vec![], &HashingEmbedder), Err(RagError::EmptyInput)));
    }

    #[test]
    fn save_load_round_trip() {
        let chunks: Vec<_> = ["get pets", "post a pet", "user login", "store inventory"]
            .iter()
            .enumerate()
            .map(|(i, t)| Chunk { id: format!("s#{i:05}"), text: t.to_string(), token_count: 2, anchor: "/x".into() })
            .collect();
        let store = index(chunks, &HashingEmbedder).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        store.save(&path).unwrap();
        let loaded = VectorStore::load(&path).unwrap();
        assert_eq!(loaded, store);
        let q = embed("pets", &HashingEmbedder).unwrap();
        assert_eq!(store.query(&q, 3).unwrap(), loaded.query(&q, 3).unwrap());
    }

    #[test]
    fn load_rejects_truncated_file() {
        let store = index(vec![chunk("a"), chunk("b")], &HashingEmbedder).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        store.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: Vec<&str> = text.lines().take(2).collect();
        std::fs::write(&path, cut.join("\n")).unwrap();
        assert!(matches!(VectorStore::load(&path), Err(RagError::CorruptStore(_))));
    }

    #[test]
    fn aggregate_orders_by_max_score() {
        let sets = vec![vec![scored("A", 0.9), scored("B", 0.5)], vec![scored("B", 0.8), scored("C", 0.4)]];
        let ids: Vec<_> = aggregate(&sets).into_iter().map(|s| s.chunk.id).collect();
        assert_eq!(ids, ["A", "B", "C"]);
        let one = vec![vec![scored("A", 0.9), scored("B", 0.5)]];
        let twice = vec![one[0].clone(), one[0].clone()];
        assert_eq!(aggregate(&one), aggregate(&twice));
    }
}
