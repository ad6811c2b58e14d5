//! Embedding providers.

use serde::{Deserialize, Serialize};

use super::RagError;

pub const HASHING_PROVIDER_ID: &str = "hashing-trigram-256";
pub const HASHING_DIM: usize = 256;

/// Text in, fixed-length real vector out. The vector need not be normalized;
/// [`embed`] normalizes it.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, RagError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
    pub dim: usize,
    pub provider_id: String,
}

impl EmbeddingVector {
    pub fn dot(&self, other: &EmbeddingVector) -> f32 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f32 {
        dot(&self.values, &self.values).sqrt()
    }
}

/// Left-to-right sum of products. Kept sequential so scores are bitwise
/// reproducible regardless of how the caller parallelizes.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0_f32, |acc, (x, y)| acc + x * y)
}

pub fn embed(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, RagError> {
    let raw = provider.embed_raw(text)?;
    if raw.len() != provider.dim() {
        return Err(RagError::DimensionMismatch { expected: provider.dim(), actual: raw.len() });
    }
    let norm = raw.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(RagError::DegenerateVector(provider.id().to_string()));
    }
    Ok(EmbeddingVector {
        values: raw.iter().map(|&x| (f64::from(x) / norm) as f32).collect(),
        dim: raw.len(),
        provider_id: provider.id().to_string(),
    })
}

/// Deterministic offline embedder: lowercase, split into alphanumeric words,
/// take the character 3-grams of each `<word>`, hash each gram (FNV-1a 64)
/// into one of 256 buckets and count.
///
/// Text with no alphanumeric word hashes its whole lowercased form as a
/// single gram so the vector is never zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashingEmbedder;

impl HashingEmbedder {
    fn grams(text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut grams = Vec::new();
        for word in lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let padded: Vec<char> = std::iter::once('<').chain(word.chars()).chain(std::iter::once('>')).collect();
            grams.extend(padded.windows(3).map(|w| w.iter().collect::<String>()));
        }
        if grams.is_empty() {
            grams.push(lower);
        }
        grams
    }

    pub fn bucket(gram: &str) -> usize {
        (fnv1a(gram.as_bytes()) % HASHING_DIM as u64) as usize
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> &str {
        HASHING_PROVIDER_ID
    }

    fn dim(&self) -> usize {
        HASHING_DIM
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, RagError> {
        let mut counts = vec![0.0_f32; HASHING_DIM];
        for gram in Self::grams(text) {
            counts[Self::bucket(&gram)] += 1.0;
        }
        Ok(counts)
    }
}

/// OpenAI-compatible `/v1/embeddings` endpoint. The API key is read from
/// the named environment variable at call time.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub base_url: String,
    pub model: String,
    pub dim: usize,
    pub api_key_env: String,
    pub timeout: std::time::Duration,
}

impl EmbeddingProvider for HttpEmbedder {
    fn id(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, RagError> {
        #[derive(Deserialize)]
        struct Item {
            embedding: Vec<f32>,
        }
        #[derive(Deserialize)]
        struct Response {
            data: Vec<Item>,
        }
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| RagError::ProviderUnavailable(format!("{} is not set", self.api_key_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let url = format!("{}/v1/embeddings", self.base_url.trim_end_matches('/'));
        let mut resp = agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(serde_json::json!({ "model": self.model, "input": text }))
            .map_err(|e| RagError::ProviderUnavailable(e.to_string()))?;
        let body: Response = resp.body_mut().read_json().map_err(|e| RagError::ProviderUnavailable(e.to_string()))?;
        body.data
            .into_iter()
            .next()
            .map(|i| i.embedding)
            .ok_or_else(|| RagError::ProviderUnavailable("empty embedding response".into()))
    }
}
