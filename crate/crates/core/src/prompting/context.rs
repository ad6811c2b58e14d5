//! Choosing between the full specification and retrieved excerpts.

use crate::expand::{expand, Requirement, RequirementVariantSet};
use crate::gateway::LlmGateway;
use crate::ingest::Tokenizer;
use crate::rag::{aggregate, chunk_text, embed, index, ChunkBounds, EmbeddingProvider, VectorStore};

use super::{ContextMode, PromptError};

/// Specs above this many tokens go through retrieval.
pub const DEFAULT_RAG_THRESHOLD: usize = 100_000;

/// Exact routing on the counted value: `tokens <= threshold` keeps the
/// whole specification.
pub fn route(spec_tokens: usize, threshold: usize) -> ContextMode {
    if spec_tokens <= threshold {
        ContextMode::FullSpec
    } else {
        ContextMode::Rag
    }
}

pub struct RagComponents<'a> {
    pub tokenizer: &'a dyn Tokenizer,
    pub embedder: &'a dyn EmbeddingProvider,
    pub gateway: &'a LlmGateway,
    pub n_variants: usize,
    pub top_k: usize,
    pub bounds: ChunkBounds,
    /// Reuse an already indexed store instead of chunking the spec again.
    pub store: Option<&'a VectorStore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedContext {
    pub mode: ContextMode,
    /// Whole serialized spec (full-spec mode) or the concatenated retrieved
    /// chunks (RAG mode).
    pub text: String,
    pub spec_tokens: usize,
    pub chunk_ids: Vec<String>,
    pub variants: Option<RequirementVariantSet>,
    pub degraded: Option<String>,
}

fn render_chunk(id: &str, anchor: &str, text: &str) -> String {
    let mut s =
        if anchor.is_empty() { format!("----- {id} -----\n") } else { format!("----- {id} ({anchor}) -----\n") };
    s.push_str(text);
    if !text.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Full spec when it fits under `threshold_tokens`; otherwise expand the
/// requirement, query once per variant, aggregate, and add whole chunks in
/// aggregate order while they fit in `rag_budget_tokens`.
pub fn select_context(
    source_name: &str,
    spec_text: &str,
    req: &Requirement,
    threshold_tokens: usize,
    rag_budget_tokens: usize,
    rag: &RagComponents<'_>,
) -> Result<SelectedContext, PromptError> {
    let spec_tokens = rag.tokenizer.count(spec_text);
    if route(spec_tokens, threshold_tokens) == ContextMode::FullSpec {
        return Ok(SelectedContext {
            mode: ContextMode::FullSpec,
            text: spec_text.to_string(),
            spec_tokens,
            chunk_ids: Vec::new(),
            variants: None,
            degraded: None,
        });
    }

    let owned;
    let store = match rag.store {
        Some(s) => s,
        None => {
            if spec_text.is_empty() {
                return Err(PromptError::EmptyRetrieval);
            }
            let chunks = chunk_text(source_name, spec_text, rag.tokenizer, rag.bounds)?;
            owned = index(chunks, rag.embedder)?;
            &owned
        }
    };

    let expansion = expand(req, rag.n_variants, rag.gateway);
    let mut result_sets = Vec::with_capacity(expansion.set.variants.len());
    for variant in &expansion.set.variants {
        let q = embed(variant, rag.embedder)?;
        result_sets.push(store.query(&q, rag.top_k.max(1))?);
    }
    let hits = aggregate(&result_sets);
    if hits.is_empty() {
        return Err(PromptError::EmptyRetrieval);
    }

    let mut text = String::new();
    let mut used = 0;
    let mut chunk_ids = Vec::new();
    for hit in &hits {
        let piece = render_chunk(&hit.chunk.id, &hit.chunk.anchor, &hit.chunk.text);
        let cost = rag.tokenizer.count(&piece);
        if used + cost > rag_budget_tokens {
            break;
        }
        used += cost;
        text.push_str(&piece);
        chunk_ids.push(hit.chunk.id.clone());
    }
    if chunk_ids.is_empty() {
        let first = render_chunk(&hits[0].chunk.id, &hits[0].chunk.anchor, &hits[0].chunk.text);
        return Err(PromptError::BudgetExceeded { needed: rag.tokenizer.count(&first), budget: rag_budget_tokens });
    }
    Ok(SelectedContext {
        mode: ContextMode::Rag,
        text,
        spec_tokens,
        chunk_ids,
        variants: Some(expansion.set),
        degraded: expansion.degraded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatProvider, GatewayMode, LlmConfig, ScriptedProvider};
    use crate::ingest::ApproxTokenizer;
    use crate::rag::HashingEmbedder;
    use std::sync::Arc;

    fn gateway(replies: &[&str]) -> LlmGateway {
        let p: Arc<dyn ChatProvider> = Arc::new(ScriptedProvider::queue(replies.iter().map(|s| s.to_string())));
        LlmGateway::new(LlmConfig { mode: GatewayMode::Live, ..LlmConfig::default() }, Some(p)).unwrap()
    }

    fn components<'a>(gw: &'a LlmGateway) -> RagComponents<'a> {
        RagComponents {
            tokenizer: &ApproxTokenizer,
            embedder: &HashingEmbedder,
            gateway: gw,
            n_variants: 3,
            top_k: 10,
            bounds: ChunkBounds::default(),
            store: None,
        }
    }

    /// Canonical-looking JSON with `n_paths` path entries of ~`per_path` tokens.
    fn synthetic_spec(n_paths: usize, per_path: usize) -> String {
        let mut s = String::from("{\n  \"paths\": {\n");
        for i in 0..n_paths {
            s.push_str(&format!("    \"/resource{i}\": {{\n"));
            let topic = ["pets", "orders", "users", "vehicles"][i % 4];
            for _ in 0..per_path / 10 {
                s.push_str(&format!("      \"description\": \"{topic} list find create update {topic} item\",\n"));
            }
            s.push_str("    },\n");
        }
        s.push_str("  }\n}\n");
        s
    }

    #[test]
    fn routing_is_exact_at_threshold() {
        assert_eq!(route(100_000, 100_000), ContextMode::FullSpec);
        assert_eq!(route(100_001, 100_000), ContextMode::Rag);
        assert_eq!(route(1, 0), ContextMode::Rag);
        assert_eq!(route(4_070, DEFAULT_RAG_THRESHOLD), ContextMode::FullSpec);
        assert_eq!(route(424_465, DEFAULT_RAG_THRESHOLD), ContextMode::Rag);
    }

    #[test]
    fn small_spec_is_passed_whole() {
        let gw = gateway(&[]);
        let spec = synthetic_spec(3, 100);
        let req = Requirement::new("r", "list pets");
        let sel = select_context("s", &spec, &req, DEFAULT_RAG_THRESHOLD, 50_000, &components(&gw)).unwrap();
        assert_eq!(sel.mode, ContextMode::FullSpec);
        assert_eq!(sel.text, spec);
        assert_eq!(gw.totals().calls, 0);
    }

    #[test]
    fn rag_mode_respects_budget_at_chunk_granularity() {
        let gw = gateway(&["show all pets\nget the pet list"]);
        let spec = synthetic_spec(80, 400);
        let req = Requirement::new("r", "As a user I want to list pets");
        let sel = select_context("s", &spec, &req, 0, 3_000, &components(&gw)).unwrap();
        assert_eq!(sel.mode, ContextMode::Rag);
        assert!(ApproxTokenizer.count(&sel.text) <= 3_000);
        assert!(!sel.chunk_ids.is_empty());
        assert_eq!(sel.variants.as_ref().unwrap().variants.len(), 3);
        // every included chunk appears whole
        let chunks = chunk_text("s", &spec, &ApproxTokenizer, ChunkBounds::default()).unwrap();
        for id in &sel.chunk_ids {
            let c = chunks.iter().find(|c| &c.id == id).unwrap();
            assert!(sel.text.contains(&c.text));
        }
    }

    #[test]
    fn rag_with_tiny_budget_fails() {
        let gw = gateway(&["x"]);
        let spec = synthetic_spec(40, 400);
        let req = Requirement::new("r", "list pets");
        let err = select_context("s", &spec, &req, 0, 10, &components(&gw)).unwrap_err();
        assert!(matches!(err, PromptError::BudgetExceeded { budget: 10, .. }));
    }

    #[test]
    fn expansion_failure_still_retrieves() {
        let gw = gateway(&[]);
        let spec = synthetic_spec(40, 400);
        let req = Requirement::new("r", "list pets");
        let sel = select_context("s", &spec, &req, 0, 10_000, &components(&gw)).unwrap();
        assert!(sel.degraded.is_some());
        assert_eq!(sel.variants.unwrap().variants, ["list pets"]);
        assert!(!sel.chunk_ids.is_empty());
    }
}
