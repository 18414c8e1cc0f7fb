//! Per-message text embeddings `e_m` and their on-disk cache.

mod cache;
mod hash;
mod transformer;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheStats, EmbeddingCache};
pub use hash::HashEmbedder;
pub use transformer::{DistilBert, Pooling, MODEL_DIR_ENV};

/// Width of the encoder output.
pub const EMBED_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("encoding failed: {0}")]
    EncodeFailure(String),
    #[error("embedding cache corrupt: {0}")]
    CacheCorrupt(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embeddings from provider {found} mixed into a {expected} dataset")]
    MixedProviders { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Something that maps normalized text to a fixed-width vector.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dim(&self) -> usize;
    /// `text` is already normalized and nonempty.
    fn encode(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f32>,
    pub provider_id: String,
    pub text_hash: [u8; 32],
    /// The text was empty after normalization and `vector` is all zero.
    pub empty: bool,
}

/// HTML entities decoded, surrounding whitespace removed.
pub fn normalize_text(text: &str) -> String {
    html_escape::decode_html_entities(text).trim().to_string()
}

pub fn text_hash(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

pub fn embed_message(provider: &dyn EmbeddingProvider, text: &str) -> Result<Embedding, EmbedError> {
    let normalized = normalize_text(text);
    let dim = provider.dim();
    let (vector, empty) = if normalized.is_empty() {
        (vec![0.0; dim], true)
    } else {
        let v = provider.encode(&normalized)?;
        if v.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(EmbedError::EncodeFailure(format!("non-finite entry at {i}")));
        }
        (v, false)
    };
    Ok(Embedding {
        vector,
        provider_id: provider.provider_id().to_string(),
        text_hash: text_hash(text),
        empty,
    })
}

/// Fails unless every embedding comes from `provider_id`.
pub fn ensure_single_provider<'a, I>(provider_id: &str, embeddings: I) -> Result<(), EmbedError>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    for e in embeddings {
        if e.provider_id != provider_id {
            return Err(EmbedError::MixedProviders {
                expected: provider_id.to_string(),
                found: e.provider_id.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_flagged_zero_vector() {
        let h = HashEmbedder::new(1);
        let e = embed_message(&h, " \n ").unwrap();
        assert!(e.empty);
        assert_eq!(e.vector, vec![0.0; EMBED_DIM]);
    }

    #[test]
    fn mixed_providers_rejected() {
        let a = embed_message(&HashEmbedder::new(1), "hello").unwrap();
        let b = embed_message(&HashEmbedder::new(2), "hello").unwrap();
        assert!(ensure_single_provider(&a.provider_id, [&a]).is_ok());
        assert!(matches!(
            ensure_single_provider(&a.provider_id, [&a, &b]),
            Err(EmbedError::MixedProviders { .. })
        ));
    }
}
