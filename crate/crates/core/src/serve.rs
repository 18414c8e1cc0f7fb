//! Prediction service: request and response schemas and the transport-free handler.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{embed_message, EmbedError, EmbeddingCache, EmbeddingProvider};
use crate::regressor::{load_checkpoint, predict, CheckpointHeader, FeatureSequence, ModelParams, RegressorError, Step};
use crate::threadsel::SEQ_CAP;
use crate::tone::{lexicon_checksum, ToneScorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadMessage {
    pub text: String,
    pub author: String,
    #[serde(default)]
    pub created_utc: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    pub text: String,
    /// Treat the draft as written by the thread author instead of a commenter.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub as_author: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    /// Chronological; the first message is the post.
    pub messages: Vec<ThreadMessage>,
    pub post_author: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draft: Option<Draft>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    /// Clamped to [-1, 1].
    pub predicted_emt: f64,
    /// One per message, then one for the draft if present.
    pub per_message_emt: Vec<f64>,
    pub model_id: String,
    pub latency_ms: f64,
    /// Only the first 64 messages reached the model.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthStatus {
    Ok,
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: HealthStatus,
    pub model_id: Option<String>,
    pub provider_id: String,
    pub tone_scorer: String,
    pub lexicon_sha256: String,
    pub uptime_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("no model loaded: {0}")]
    ModelNotLoaded(String),
    #[error("request has no messages")]
    EmptyRequest,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] RegressorError),
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub params: ModelParams,
    pub model_id: String,
    pub header: Option<CheckpointHeader>,
}

/// Stateless between requests; shares the model read-only across threads.
pub struct PredictService {
    model: Option<LoadedModel>,
    problems: Vec<String>,
    scorer: Arc<dyn ToneScorer>,
    provider: Arc<dyn EmbeddingProvider>,
    cache: Option<Arc<EmbeddingCache>>,
    lexicon_sha256: String,
    started: Instant,
}

impl PredictService {
    pub fn new(
        scorer: Arc<dyn ToneScorer>,
        provider: Arc<dyn EmbeddingProvider>,
        cache: Option<Arc<EmbeddingCache>>,
    ) -> Self {
        PredictService {
            model: None,
            problems: Vec::new(),
            scorer,
            provider,
            cache,
            lexicon_sha256: lexicon_checksum(),
            started: Instant::now(),
        }
    }

    pub fn with_model(mut self, params: ModelParams, model_id: impl Into<String>) -> Self {
        if params.config.embed_dim != self.provider.dim() {
            self.problems.push(format!(
                "model expects {}-dim embeddings, provider gives {}",
                params.config.embed_dim,
                self.provider.dim()
            ));
        }
        self.model = Some(LoadedModel {
            params,
            model_id: model_id.into(),
            header: None,
        });
        self
    }

    /// Loads a checkpoint; failures and provenance mismatches leave the
    /// service degraded with a reason rather than erroring.
    pub fn with_checkpoint(mut self, path: &Path) -> Self {
        match load_checkpoint(path) {
            Ok(ck) => {
                let h = ck.header;
                if let Some(lex) = &h.lexicon_sha256 {
                    if *lex != self.lexicon_sha256 {
                        self.problems
                            .push(format!("lexicon checksum {lex} differs from the loaded lexicon {}", self.lexicon_sha256));
                    }
                }
                if let Some(p) = &h.provider_id {
                    if p != self.provider.provider_id() {
                        self.problems
                            .push(format!("model trained on {p} embeddings, serving {}", self.provider.provider_id()));
                    }
                }
                let id = h.model_id.clone();
                self = self.with_model(ck.params, id);
                if let Some(m) = &mut self.model {
                    m.header = Some(h);
                }
            }
            Err(e) => self.problems.push(format!("checkpoint {}: {e}", path.display())),
        }
        self
    }

    pub fn model(&self) -> Option<&LoadedModel> {
        self.model.as_ref()
    }

    pub fn health(&self) -> HealthResponse {
        let mut reasons = self.problems.clone();
        if self.model.is_none() && reasons.is_empty() {
            reasons.push("no model loaded".into());
        }
        HealthResponse {
            status: if self.model.is_some() && reasons.is_empty() {
                HealthStatus::Ok
            } else {
                HealthStatus::Degraded
            },
            model_id: self.model.as_ref().map(|m| m.model_id.clone()),
            provider_id: self.provider.provider_id().to_string(),
            tone_scorer: self.scorer.scorer_id().to_string(),
            lexicon_sha256: self.lexicon_sha256.clone(),
            uptime_s: self.started.elapsed().as_secs_f64(),
            reasons,
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let e = match &self.cache {
            Some(c) => c.get_or_compute(text, self.provider.as_ref())?,
            None => embed_message(self.provider.as_ref(), text)?,
        };
        Ok(e.vector)
    }

    pub fn handle_predict(&self, req: &PredictRequest) -> Result<PredictResponse, ServeError> {
        let start = Instant::now();
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| ServeError::ModelNotLoaded(self.problems.join("; ")))?;
        if req.messages.is_empty() {
            return Err(ServeError::EmptyRequest);
        }
        let mut thread: Vec<(&str, bool)> = req
            .messages
            .iter()
            .enumerate()
            .map(|(i, m)| (m.text.as_str(), i == 0 || m.author == req.post_author))
            .collect();
        if let Some(d) = &req.draft {
            thread.push((&d.text, d.as_author));
        }
        let per_message_emt: Vec<f64> = thread.iter().map(|(t, _)| self.scorer.score_text(t).compound).collect();
        let truncated = thread.len() > SEQ_CAP;
        let steps = thread
            .iter()
            .zip(&per_message_emt)
            .take(SEQ_CAP)
            .map(|((text, is_author), emt)| {
                Ok(Step {
                    embedding: self.embed(text)?,
                    emt: *emt,
                    is_author: *is_author,
                })
            })
            .collect::<Result<Vec<_>, EmbedError>>()?;
        let y = predict(&model.params, &FeatureSequence::new("request", steps, 0.0))?;
        Ok(PredictResponse {
            predicted_emt: y.clamp(-1.0, 1.0),
            per_message_emt,
            model_id: model.model_id.clone(),
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::regressor::{save_checkpoint, CheckpointMeta, ModelConfig};
    use crate::tone::VaderTone;

    fn service() -> PredictService {
        PredictService::new(Arc::new(VaderTone::default()), Arc::new(HashEmbedder::new(0)), None)
    }

    fn request(n: usize, draft: bool) -> PredictRequest {
        PredictRequest {
            messages: (0..n)
                .map(|i| ThreadMessage {
                    text: format!("message {i} is pretty good"),
                    author: if i % 3 == 0 { "op".into() } else { format!("c{i}") },
                    created_utc: 1_500_000_000 + i as i64,
                })
                .collect(),
            post_author: "op".into(),
            draft: draft.then(|| Draft {
                text: "You are not alone!".into(),
                as_author: false,
            }),
        }
    }

    #[test]
    fn degraded_before_load() {
        let s = service();
        let h = s.health();
        assert_eq!(h.status, HealthStatus::Degraded);
        assert!(matches!(s.handle_predict(&request(2, false)), Err(ServeError::ModelNotLoaded(_))));
    }

    #[test]
    fn ok_after_load_and_deterministic() {
        let params = ModelParams::init(ModelConfig::best(), 1).unwrap();
        let s = service().with_model(params, "m1");
        let h = s.health();
        assert_eq!(h.status, HealthStatus::Ok);
        assert_eq!(h.model_id.as_deref(), Some("m1"));
        let one = s.handle_predict(&request(1, false)).unwrap();
        assert_eq!(one.per_message_emt.len(), 1);
        let a = s.handle_predict(&request(5, true)).unwrap();
        let b = s.handle_predict(&request(5, true)).unwrap();
        assert_eq!(a.per_message_emt.len(), 6);
        assert_eq!((a.predicted_emt, &a.per_message_emt), (b.predicted_emt, &b.per_message_emt));
        assert!((-1.0..=1.0).contains(&a.predicted_emt));
        let long = s.handle_predict(&request(70, true)).unwrap();
        assert!(long.truncated);
        assert_eq!(long.per_message_emt.len(), 71);
        assert!(matches!(
            s.handle_predict(&PredictRequest { messages: vec![], post_author: "x".into(), draft: None }),
            Err(ServeError::EmptyRequest)
        ));
    }

    #[test]
    fn checkpoint_provenance_checked() {
        let dir = tempfile::tempdir().unwrap();
        let params = ModelParams::init(ModelConfig::best(), 1).unwrap();
        let good = dir.path().join("good.ckpt");
        let meta = CheckpointMeta {
            provider_id: Some("hash-v1-seed0".into()),
            lexicon_sha256: Some(lexicon_checksum()),
            ..Default::default()
        };
        save_checkpoint(&good, &params, meta.clone()).unwrap();
        assert_eq!(service().with_checkpoint(&good).health().status, HealthStatus::Ok);

        let stale = dir.path().join("stale.ckpt");
        save_checkpoint(&stale, &params, CheckpointMeta { lexicon_sha256: Some("0".repeat(64)), ..meta }).unwrap();
        let h = service().with_checkpoint(&stale).health();
        assert_eq!(h.status, HealthStatus::Degraded);
        assert!(h.reasons[0].contains("lexicon"));

        let mut bytes = std::fs::read(&good).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0xff;
        let corrupt = dir.path().join("corrupt.ckpt");
        std::fs::write(&corrupt, bytes).unwrap();
        let s = service().with_checkpoint(&corrupt);
        assert_eq!(s.health().status, HealthStatus::Degraded);
        assert!(s.model().is_none());
    }

    #[test]
    fn concurrent_requests_agree() {
        let params = ModelParams::init(ModelConfig::best(), 3).unwrap();
        let s = Arc::new(service().with_model(params, "m"));
        let want = s.handle_predict(&request(12, true)).unwrap();
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let s = Arc::clone(&s);
                std::thread::spawn(move || {
                    (0..10)
                        .map(|_| s.handle_predict(&request(12, true)).unwrap())
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for r in h.join().unwrap() {
                assert_eq!(r.predicted_emt.to_bits(), want.predicted_emt.to_bits());
                assert_eq!(r.per_message_emt, want.per_message_emt);
            }
        }
    }

    #[test]
    fn wire_format() {
        let req: PredictRequest = serde_json::from_str(
            r#"{"messages":[{"text":"hi","author":"a","created_utc":1}],"post_author":"a","draft":{"text":"yo"}}"#,
        )
        .unwrap();
        assert_eq!(req.draft.as_ref().unwrap().text, "yo");
        let resp = PredictResponse {
            predicted_emt: 0.5,
            per_message_emt: vec![0.1],
            model_id: "m".into(),
            latency_ms: 1.0,
            truncated: false,
        };
        let v: serde_json::Value = serde_json::to_value(&resp).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, ["latency_ms", "model_id", "per_message_emt", "predicted_emt", "truncated"]);
        let h = serde_json::to_value(service().health()).unwrap();
        assert_eq!(h["status"], "degraded");
    }
}
