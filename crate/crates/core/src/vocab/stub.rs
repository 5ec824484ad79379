use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{cosine, unit, EmbeddingProvider};
use crate::error::Result;

pub const STUB_DIMENSION: usize = 64;

/// Deterministic offline embeddings derived from a hash of `(seed, label)`.
///
/// Tests can pin a label's vector with [`StubProvider::with_vector`] or force
/// the similarity of a specific pair with [`StubProvider::with_similarity`];
/// pair overrides affect only [`EmbeddingProvider::similarity`].
#[derive(Debug, Clone)]
pub struct StubProvider {
    seed: u64,
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
    pairs: HashMap<(String, String), f64>,
}

pub fn stub_provider(seed: u64) -> StubProvider {
    StubProvider::new(seed, STUB_DIMENSION)
}

impl StubProvider {
    pub fn new(seed: u64, dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            seed,
            dimension,
            vectors: HashMap::new(),
            pairs: HashMap::new(),
        }
    }

    pub fn with_vector(mut self, label: &str, vector: Vec<f64>) -> Self {
        self.vectors.insert(label.to_string(), unit(vector));
        self
    }

    pub fn with_similarity(mut self, a: &str, b: &str, similarity: f64) -> Self {
        self.pairs.insert(pair_key(a, b), similarity);
        self
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn hashed(&self, label: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        let raw: Vec<f64> = (0..self.dimension)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        unit(raw)
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl EmbeddingProvider for StubProvider {
    fn embed(&self, label: &str) -> Result<Vec<f64>> {
        Ok(self
            .vectors
            .get(label)
            .cloned()
            .unwrap_or_else(|| self.hashed(label)))
    }

    fn similarity(&self, a: &str, va: &[f64], b: &str, vb: &[f64]) -> f64 {
        self.pairs
            .get(&pair_key(a, b))
            .copied()
            .unwrap_or_else(|| cosine(va, vb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_unit_vectors() {
        let p = stub_provider(11);
        let a = p.embed("geometry").unwrap();
        assert_eq!(a, p.embed("geometry").unwrap());
        assert_eq!(a.len(), STUB_DIMENSION);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert_ne!(a, stub_provider(12).embed("geometry").unwrap());
        assert_ne!(a, p.embed("topology").unwrap());
    }

    #[test]
    fn overrides() {
        let p = stub_provider(0).with_similarity("algebra", "linear algebra", 0.8);
        let va = p.embed("algebra").unwrap();
        let vb = p.embed("linear algebra").unwrap();
        assert_eq!(p.similarity("algebra", &va, "linear algebra", &vb), 0.8);
        assert_eq!(p.similarity("linear algebra", &vb, "algebra", &va), 0.8);

        let p = stub_provider(0)
            .with_vector("x", vec![3.0, 4.0])
            .with_vector("y", vec![4.0, 3.0]);
        let (vx, vy) = (p.embed("x").unwrap(), p.embed("y").unwrap());
        assert!((p.similarity("x", &vx, "y", &vy) - 0.96).abs() < 1e-12);
    }
}
