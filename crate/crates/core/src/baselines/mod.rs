//! Reference predictors: UNCHANGED, MEAN, LAST, and boosted trees over
//! pooled message features.

mod gbt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gbt::{fit_gbt, fit_gbt_grid, predict_gbt, BinnedMatrix, GbtGrid, GbtModel, GbtParams, GbtRun};

use crate::regressor::FeatureSequence;
use crate::threadsel::ThreadSegment;

/// Report name of the tree baseline.
pub const GBT: &str = "XGB";

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("message {index} of {segment} has no embedding")]
    MissingEmbedding { segment: String, index: usize },
    #[error("segment {0} has no messages")]
    EmptySegment(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("feature width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    /// Tone of the opening post: no shift.
    Unchanged,
    /// Mean tone of every message in `S`.
    Mean,
    /// Tone of the last message in `S`.
    Last,
}

impl Heuristic {
    pub const ALL: [Heuristic; 3] = [Heuristic::Unchanged, Heuristic::Mean, Heuristic::Last];

    pub fn name(&self) -> &'static str {
        match self {
            Heuristic::Unchanged => "UNCHANGED",
            Heuristic::Mean => "MEAN",
            Heuristic::Last => "LAST",
        }
    }

    /// `tones` are the tones of `S` in order; the first is the post.
    pub fn predict_tones(&self, tones: &[f64]) -> f64 {
        assert!(!tones.is_empty(), "a segment has at least the post");
        match self {
            Heuristic::Unchanged => tones[0],
            Heuristic::Mean => tones.iter().sum::<f64>() / tones.len() as f64,
            Heuristic::Last => tones[tones.len() - 1],
        }
    }

    pub fn predict_segment(&self, seg: &ThreadSegment) -> f64 {
        let tones: Vec<f64> = seg.messages.iter().map(|m| m.tone()).collect();
        self.predict_tones(&tones)
    }

    pub fn predict_sequence(&self, seq: &FeatureSequence) -> f64 {
        let tones: Vec<f64> = seq.valid().iter().map(|s| s.emt).collect();
        self.predict_tones(&tones)
    }
}

/// Element-wise mean then element-wise max of `(e_m, EmT(m), is_post_author(m))`
/// over the valid steps.
pub fn pool_features(seq: &FeatureSequence) -> Result<Vec<f64>, BaselineError> {
    let steps = seq.valid();
    if steps.is_empty() {
        return Err(BaselineError::EmptySegment(seq.id.clone()));
    }
    let width = steps[0].embedding.len() + 2;
    let mut sum = vec![0.0; width];
    let mut max = vec![f64::NEG_INFINITY; width];
    for (i, s) in steps.iter().enumerate() {
        if s.embedding.is_empty() || s.embedding.len() + 2 != width {
            return Err(BaselineError::MissingEmbedding {
                segment: seq.id.clone(),
                index: i,
            });
        }
        let row = s
            .embedding
            .iter()
            .map(|&v| v as f64)
            .chain([s.emt, if s.is_author { 1.0 } else { 0.0 }]);
        for (j, v) in row.enumerate() {
            sum[j] += v;
            max[j] = max[j].max(v);
        }
    }
    let n = steps.len() as f64;
    let mut out: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
    out.extend(max);
    Ok(out)
}
