use super::{EmbedError, EmbeddingProvider, EMBED_DIM};

/// Signed feature hashing of lowercase word unigrams and bigrams.
///
/// Cheap and deterministic; stands in for the transformer encoder in tests
/// and desk-scale experiments.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    id: String,
}

impl HashEmbedder {
    pub fn new(seed: u64) -> Self {
        HashEmbedder {
            seed,
            id: format!("hash-v1-seed{seed}"),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn feature_hash(seed: u64, parts: &[&str]) -> u64 {
    // FNV-1a with a unit separator between words
    let mut h = 0xcbf2_9ce4_8422_2325 ^ splitmix(seed);
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h = (h ^ 0x1f).wrapping_mul(0x100_0000_01b3);
        }
        for b in part.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
        }
    }
    splitmix(h)
}

pub(crate) fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

impl EmbeddingProvider for HashEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        EMBED_DIM
    }

    fn encode(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let words = words(text);
        let mut acc = vec![0.0f64; EMBED_DIM];
        let mut add = |h: u64| {
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            acc[(h % EMBED_DIM as u64) as usize] += sign;
        };
        for (i, w) in words.iter().enumerate() {
            add(feature_hash(self.seed, &[w]));
            if i + 1 < words.len() {
                add(feature_hash(self.seed, &[w, &words[i + 1]]));
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // only punctuation, or every feature cancelled out
            return Ok(vec![0.0; EMBED_DIM]);
        }
        Ok(acc.iter().map(|x| (x / norm) as f32).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_message;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_seeded() {
        let a = HashEmbedder::new(3).encode("I feel better").unwrap();
        assert_eq!(a, HashEmbedder::new(3).encode("I feel better").unwrap());
        assert_ne!(a, HashEmbedder::new(4).encode("I feel better").unwrap());
        assert_eq!(a.len(), EMBED_DIM);
    }

    #[test]
    fn word_order_matters_through_bigrams() {
        let h = HashEmbedder::new(0);
        assert_ne!(h.encode("not good").unwrap(), h.encode("good not").unwrap());
    }

    proptest! {
        #[test]
        fn unit_norm(text in "[a-z]{1,8}( [a-z]{1,8}){0,20}", seed in 0u64..1000) {
            let e = embed_message(&HashEmbedder::new(seed), &text).unwrap();
            let n: f64 = e.vector.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-6, "norm {}", n);
        }
    }
}
