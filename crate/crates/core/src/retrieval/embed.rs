use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::store::{tokenize, ProviderInfo};

#[derive(Debug, Clone, Error)]
#[error("embedding provider error: {message}")]
pub struct ProviderError {
    pub message: String,
    /// Transient failures may be retried by the caller.
    pub retryable: bool,
}

/// Maps text to a fixed-dimension vector.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;

    fn info(&self) -> ProviderInfo {
        ProviderInfo::new(self.name(), self.dim())
    }
}

/// Signed feature hashing of lowercase tokens, L2-normalized.
///
/// Deterministic for a given seed and dimension, needs no model, and keeps
/// token overlap visible as cosine similarity.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    seed: u64,
    dim: usize,
    name: String,
}

impl HashingEmbedder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            seed,
            dim,
            name: format!("hashing-v1-seed{seed}"),
        }
    }

    fn bucket(&self, token: &str) -> (usize, f64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest = h.finalize();
        let idx = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        ((idx % self.dim as u64) as usize, sign)
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(0, Self::DEFAULT_DIM)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        if text.is_empty() {
            return Err(ProviderError {
                message: "cannot embed empty text".into(),
                retryable: false,
            });
        }
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens.push(text.to_string());
        }
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            let (i, s) = self.bucket(t);
            v[i] += s;
        }
        let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Every token cancelled out; fall back to the whole text.
            let (i, _) = self.bucket(text);
            v[i] = 1.0;
            norm = 1.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}
