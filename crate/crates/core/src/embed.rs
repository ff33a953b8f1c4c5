//! Deterministic text embeddings.
//!
//! [`hash_embed`] is a signed feature-hashing embedder over character
//! 3-grams. It stands in for a neural encoder in tests, synthetic corpora
//! and the trained router's feature extractor.

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 8;

/// Produces query/item vectors of a requested dimension.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str, dim: usize) -> Result<Vec<f32>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str, dim: usize) -> Result<Vec<f32>> {
        Ok(hash_embed(text, dim, self.seed)?
            .into_iter()
            .map(|x| x as f32)
            .collect())
    }
}

/// L2-normalized signed hash of the lowercase, whitespace-collapsed
/// character 3-grams of `text` (padded with one space on each side).
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Result<Vec<f64>> {
    let mut v = vec![0.0f64; dim];
    for (index, sign) in hashed_grams(text, dim, seed)? {
        v[index] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::NoFeatures);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Sparse form of [`hash_embed`]: sorted `(index, value)` pairs, zeros dropped.
pub fn hash_embed_sparse(text: &str, dim: usize, seed: u64) -> Result<Vec<(u32, f64)>> {
    let dense = hash_embed(text, dim, seed)?;
    Ok(dense
        .into_iter()
        .enumerate()
        .filter(|(_, x)| *x != 0.0)
        .map(|(i, x)| (i as u32, x))
        .collect())
}

fn hashed_grams(text: &str, dim: usize, seed: u64) -> Result<Vec<(usize, f64)>> {
    if dim < MIN_DIM {
        return Err(Error::DimTooSmall(dim));
    }
    let normalized = text
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    let padded: Vec<char> = format!(" {normalized} ").chars().collect();
    if padded.len() < 3 || normalized.is_empty() {
        return Err(Error::NoFeatures);
    }
    let mut buf = [0u8; 12];
    Ok(padded
        .windows(3)
        .map(|gram| {
            let mut len = 0;
            for c in gram {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = mix(fnv1a64(&buf[..len], seed));
            let index = (h % dim as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            (index, sign)
        })
        .collect())
}

fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

// splitmix64 finalizer; FNV's low bits are weak for small moduli.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit hash of a string, used to derive per-query seeds.
pub(crate) fn stable_hash(text: &str, seed: u64) -> u64 {
    mix(fnv1a64(text.as_bytes(), seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn deterministic() {
        assert_eq!(hash_embed("abc", 64, 7).unwrap(), hash_embed("abc", 64, 7).unwrap());
        assert_ne!(hash_embed("abc", 64, 7).unwrap(), hash_embed("abc", 64, 8).unwrap());
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(hash_embed("", 64, 7), Err(Error::NoFeatures)));
        assert!(matches!(hash_embed("   \t", 64, 7), Err(Error::NoFeatures)));
        assert!(matches!(hash_embed("abc", 7, 7), Err(Error::DimTooSmall(7))));
    }

    #[test]
    fn self_cosine_is_one() {
        let v = hash_embed("blue whale", 32, 1).unwrap();
        assert!((dot(&v, &v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lexical_overlap_orders_similarity() {
        let a = hash_embed("the capital of France", 256, 7).unwrap();
        let b = hash_embed("capital of France", 256, 7).unwrap();
        let c = hash_embed("blue whale video", 256, 7).unwrap();
        let ab = dot(&a, &b);
        let ac = dot(&a, &c);
        assert!(ab > ac, "{ab} <= {ac}");
    }

    #[test]
    fn case_and_whitespace_insensitive() {
        assert_eq!(
            hash_embed("Blue   WHALE", 64, 3).unwrap(),
            hash_embed("blue whale", 64, 3).unwrap()
        );
    }

    #[test]
    fn sparse_matches_dense() {
        let dense = hash_embed("sparse check", 128, 5).unwrap();
        let sparse = hash_embed_sparse("sparse check", 128, 5).unwrap();
        let mut rebuilt = vec![0.0; 128];
        for (i, x) in sparse {
            rebuilt[i as usize] = x;
        }
        assert_eq!(rebuilt, dense);
    }

    proptest! {
        #[test]
        fn unit_norm(text in "[a-zA-Z ]{1,40}[a-z]", dim in 8usize..512, seed in any::<u64>()) {
            match hash_embed(&text, dim, seed) {
                Ok(v) => {
                    prop_assert_eq!(v.len(), dim);
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    prop_assert!((norm - 1.0).abs() < 1e-9);
                }
                // every signed feature cancelled; rare at small dims
                Err(Error::NoFeatures) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }
}
