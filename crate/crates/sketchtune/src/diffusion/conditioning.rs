//! Prompt conditioning. Toy mode uses a fixed-seed hashed bag-of-tokens
//! embedding standing in for a pretrained text encoder; real mode plugs a
//! pretrained encoder behind the same trait.

use ndarray::{Array2, ArrayD};

/// A prompt with its token embedding sequence `[L, D]`.
#[derive(Debug, Clone)]
pub struct CondEmbedding {
    pub prompt: String,
    pub tokens: ArrayD<f64>,
}

impl CondEmbedding {
    pub fn dim(&self) -> usize {
        self.tokens.shape()[1]
    }

    pub fn len(&self) -> usize {
        self.tokens.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps prompt text to an embedding sequence of fixed dimensionality.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, prompt: &str) -> CondEmbedding;
}

/// Deterministic toy encoder: tokens are lowercased whitespace words hashed
/// into a fixed-seed embedding table.
pub struct HashedBagEncoder {
    table: Array2<f64>,
    max_tokens: usize,
}

impl HashedBagEncoder {
    pub fn new(seed: u64, dim: usize, vocab: usize, max_tokens: usize) -> Self {
        use rand_distr::{Distribution, Normal};
        let mut rng = crate::nn::seeded_rng(seed, "text-embedding-table");
        let normal = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).unwrap();
        let table = Array2::from_shape_fn((vocab, dim), |_| normal.sample(&mut rng));
        Self { table, max_tokens }
    }

    /// Default toy configuration: 16-dim embeddings over 512 hash buckets.
    pub fn toy(seed: u64) -> Self {
        Self::new(seed, 16, 512, 16)
    }
}

fn fnv1a(token: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl TextEncoder for HashedBagEncoder {
    fn dim(&self) -> usize {
        self.table.ncols()
    }

    fn encode(&self, prompt: &str) -> CondEmbedding {
        let vocab = self.table.nrows();
        let tokens: Vec<usize> = prompt
            .to_lowercase()
            .split_whitespace()
            .take(self.max_tokens)
            .map(|tok| {
                let cleaned: String = tok.chars().filter(|c| c.is_alphanumeric()).collect();
                (fnv1a(&cleaned) % vocab as u64) as usize
            })
            .collect();
        let l = tokens.len().max(1);
        let mut out = Array2::<f64>::zeros((l, self.dim()));
        for (i, &bucket) in tokens.iter().enumerate() {
            out.row_mut(i).assign(&self.table.row(bucket));
        }
        CondEmbedding {
            prompt: prompt.to_string(),
            tokens: out.into_dyn(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_is_deterministic_and_seed_sensitive() {
        let e1 = HashedBagEncoder::toy(1);
        let e2 = HashedBagEncoder::toy(1);
        let e3 = HashedBagEncoder::toy(2);
        let a = e1.encode("a simple drawing of a fish");
        let b = e2.encode("a simple drawing of a fish");
        let c = e3.encode("a simple drawing of a fish");
        assert_eq!(a.tokens, b.tokens);
        assert_ne!(a.tokens, c.tokens);
    }

    #[test]
    fn fixed_dimensionality_and_empty_prompt() {
        let e = HashedBagEncoder::toy(0);
        let a = e.encode("");
        assert_eq!(a.tokens.shape(), &[1, 16]);
        assert!(a.tokens.iter().all(|v| *v == 0.0));
        let b = e.encode("one two three four");
        assert_eq!(b.tokens.shape(), &[4, 16]);
    }

    #[test]
    fn same_word_same_row() {
        let e = HashedBagEncoder::toy(0);
        let emb = e.encode("fish fish");
        let r0: Vec<f64> = emb.tokens.slice(ndarray::s![0, ..]).to_vec();
        let r1: Vec<f64> = emb.tokens.slice(ndarray::s![1, ..]).to_vec();
        assert_eq!(r0, r1);
    }
}
