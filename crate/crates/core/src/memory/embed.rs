use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::util::{fnv1a, word_tokens};

/// Fixed-dimension dense vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine similarity; 0.0 when either vector is zero or dimensions differ.
///
/// Computed as `a·b / sqrt(|a|²|b|²)` so that identical vectors score
/// exactly 1.0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return 0.0;
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    (dot / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Embedding>;
}

/// Bag-of-words projection: each lowercased word token increments the
/// bucket chosen by its FNV-1a hash. Deterministic and model-free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder { dim }
    }

    /// Bucket index for an already-normalized token.
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dim as u64) as usize
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let mut v = vec![0.0; self.dim];
        for token in word_tokens(text) {
            v[self.bucket(&token)] += 1.0;
        }
        Ok(Embedding(v))
    }
}

/// Calls an `/embeddings` endpoint in the common request shape.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    dim: usize,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(url: &str, model: &str, dim: usize) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Embed(e.to_string()))?;
        Ok(HttpEmbedder {
            client,
            endpoint: format!("{}/embeddings", url.trim_end_matches('/')),
            model: model.to_string(),
            dim,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&json!({"model": self.model, "input": text}))
            .send()
            .map_err(|e| Error::Embed(e.to_string()))?;
        if !response.status().is_success() {
            return Err(Error::Embed(format!("HTTP {}", response.status())));
        }
        let body: EmbeddingResponse = response.json().map_err(|e| Error::Embed(e.to_string()))?;
        let v = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| Error::Embed("empty embedding response".into()))?
            .embedding;
        if v.len() != self.dim {
            return Err(Error::Embed(format!(
                "expected dimension {}, endpoint returned {}",
                self.dim,
                v.len()
            )));
        }
        Ok(Embedding(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hash {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Http {
        url: String,
        model: String,
        dim: usize,
    },
}

fn default_dim() -> usize {
    HashEmbedder::DEFAULT_DIM
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig::Hash { dim: default_dim() }
    }
}

impl EmbedderConfig {
    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        match self {
            EmbedderConfig::Hash { dim } if *dim == 0 => {
                Err(Error::Config("embedder.dim must be positive".into()))
            }
            EmbedderConfig::Hash { dim } => Ok(Box::new(HashEmbedder::new(*dim))),
            EmbedderConfig::Http { url, model, dim } => Ok(Box::new(HttpEmbedder::new(url, model, *dim)?)),
        }
    }
}
