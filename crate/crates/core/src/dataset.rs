//! Tone scoring of selected segments and assembly of model inputs.

use rayon::prelude::*;
use thiserror::Error;

use crate::embed::{embed_message, EmbedError, Embedding, EmbeddingCache, EmbeddingProvider};
use crate::regressor::{FeatureSequence, Step};
use crate::threadsel::{ThreadSegment, SEQ_CAP};
use crate::tone::ToneScorer;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("segment {0} has unscored messages")]
    Unscored(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Fills `emt` on every message and target.
pub fn score_segments(segments: &mut [ThreadSegment], scorer: &dyn ToneScorer) {
    segments.par_iter_mut().for_each(|s| {
        for m in s.messages.iter_mut().chain(std::iter::once(&mut s.target)) {
            m.emt = Some(scorer.score_text(&m.text).compound);
        }
    });
}

/// Embeds message texts through an optional cache.
#[derive(Clone, Copy)]
pub struct Featurizer<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub cache: Option<&'a EmbeddingCache>,
}

impl<'a> Featurizer<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider, cache: Option<&'a EmbeddingCache>) -> Self {
        Featurizer { provider, cache }
    }

    pub fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        match self.cache {
            Some(c) => c.get_or_compute(text, self.provider),
            None => embed_message(self.provider, text),
        }
    }

    /// `S` (at most [`SEQ_CAP`] messages) as model steps, target `EmT(c_n)`.
    pub fn sequence(&self, seg: &ThreadSegment) -> Result<FeatureSequence, DatasetError> {
        if !seg.is_scored() {
            return Err(DatasetError::Unscored(seg.segment_id.clone()));
        }
        let steps = seg
            .messages
            .iter()
            .take(SEQ_CAP)
            .map(|m| {
                Ok(Step {
                    embedding: self.embed(&m.text)?.vector,
                    emt: m.tone(),
                    is_author: m.is_post_author,
                })
            })
            .collect::<Result<Vec<_>, EmbedError>>()?;
        Ok(FeatureSequence::new(seg.segment_id.clone(), steps, seg.target.tone()))
    }

    pub fn build(&self, segments: &[ThreadSegment]) -> Result<Vec<FeatureSequence>, DatasetError> {
        segments.par_iter().map(|s| self.sequence(s)).collect()
    }

    /// Embeds every distinct message text of `segments`, returning how many
    /// texts were seen.
    pub fn warm(&self, segments: &[ThreadSegment]) -> Result<usize, EmbedError> {
        let mut texts: Vec<&str> = segments
            .iter()
            .flat_map(|s| s.messages.iter().take(SEQ_CAP).map(|m| m.text.as_str()))
            .collect();
        texts.sort_unstable();
        texts.dedup();
        texts.par_iter().try_for_each(|t| self.embed(t).map(|_| ()))?;
        Ok(texts.len())
    }
}
