//! Sentence embeddings behind a provider trait.

use std::collections::HashMap;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::text::tokenize;
use crate::error::{Error, Result};
use crate::llm::Client;

pub trait EmbeddingProvider: Send + Sync {
    fn identity(&self) -> String;
    fn dimensionality(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Offline stand-in: every token adds signed unit weights at a few hashed
/// coordinates. Shared tokens raise the cosine; it is not a semantic model.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 256, seed: 0 }
    }
}

const HASHES_PER_TOKEN: usize = 4;

impl EmbeddingProvider for HashingEmbedder {
    fn identity(&self) -> String {
        format!("hashing-{}-seed{}", self.dim, self.seed)
    }

    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            let digest = Sha256::new()
                .chain_update(self.seed.to_le_bytes())
                .chain_update(token.as_bytes())
                .finalize();
            for chunk in digest.chunks(8).take(HASHES_PER_TOKEN) {
                let word = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
                let sign = if word >> 63 == 1 { -1.0 } else { 1.0 };
                v[(word % self.dim as u64) as usize] += sign;
            }
        }
        Ok(v)
    }
}

/// Fixed text-to-vector table; unknown text is reported as a provider error.
#[derive(Debug, Clone, Default)]
pub struct TableEmbedder {
    pub dim: usize,
    pub table: HashMap<String, Vec<f64>>,
}

impl EmbeddingProvider for TableEmbedder {
    fn identity(&self) -> String {
        "table".into()
    }

    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| Error::Embedding(format!("no embedding for {text:?}")))
    }
}

/// Calls `POST {base_url}/embeddings` with `{"model", "input"}` and reads
/// `data[0].embedding`.
pub struct HttpEmbedder {
    pub client: Client,
    pub model: String,
    pub dim: usize,
}

impl EmbeddingProvider for HttpEmbedder {
    fn identity(&self) -> String {
        format!("http:{}", self.model)
    }

    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let body = json!({ "model": self.model, "input": text });
        let (resp, _) = self.client.post_json("embeddings", &body, None)?;
        let v: Vec<f64> = resp["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| Error::Embedding("response lacks data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Error::Embedding("non-numeric embedding".into())))
            .collect::<Result<_>>()?;
        if self.dim != 0 && v.len() != self.dim {
            return Err(Error::Embedding(format!(
                "expected {} dimensions, got {}",
                self.dim,
                v.len()
            )));
        }
        Ok(v)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Embedding("zero-norm embedding".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn embedding_similarity(pred: &str, reference: &str, provider: &dyn EmbeddingProvider) -> Result<f64> {
    cosine(&provider.embed(pred)?, &provider.embed(reference)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_text_has_similarity_one() {
        let p = HashingEmbedder::default();
        let s = embedding_similarity("打开音乐App购票", "打开音乐App购票", &p).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_table_vectors() {
        let p = TableEmbedder {
            dim: 2,
            table: [("x".to_string(), vec![1.0, 0.0]), ("y".to_string(), vec![0.0, 3.0])].into(),
        };
        assert_eq!(embedding_similarity("x", "y", &p).unwrap(), 0.0);
        assert!(matches!(embedding_similarity("x", "z", &p), Err(Error::Embedding(_))));
    }

    #[test]
    fn empty_text_has_zero_norm() {
        let p = HashingEmbedder::default();
        assert!(embedding_similarity("", "a", &p).is_err());
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let p = HashingEmbedder::default();
        let close = embedding_similarity("book concert tickets hangzhou", "book tickets hangzhou", &p).unwrap();
        let far = embedding_similarity("book concert tickets hangzhou", "weather radar map", &p).unwrap();
        assert!(close > far);
    }
}
