use std::path::{Path, PathBuf};

use serde::Deserialize;
use toneshift_core::embed::{embed_message, DistilBert, EmbeddingProvider, Pooling};

#[derive(Deserialize)]
struct Expected {
    text: String,
    ids: Vec<u32>,
    cls: Vec<f32>,
    mean: Vec<f32>,
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn expected() -> Vec<Expected> {
    let raw = std::fs::read_to_string(fixtures().join("tiny_distilbert_expected.json")).unwrap();
    serde_json::from_str(&raw).unwrap()
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[test]
fn tokenization_matches_reference() {
    let model = DistilBert::load(&fixtures().join("tiny-distilbert"), Pooling::FirstToken).unwrap();
    for e in expected() {
        assert_eq!(model.token_ids(&e.text).unwrap(), e.ids, "{}", e.text);
    }
}

#[test]
fn hidden_states_match_reference() {
    let cls = DistilBert::load(&fixtures().join("tiny-distilbert"), Pooling::FirstToken).unwrap();
    let mean = DistilBert::load(&fixtures().join("tiny-distilbert"), Pooling::Mean).unwrap();
    assert_ne!(cls.provider_id(), mean.provider_id());
    for e in expected() {
        let a = cls.encode(&e.text).unwrap();
        assert!(max_abs_diff(&a, &e.cls) < 1e-4, "cls {}: {}", e.text, max_abs_diff(&a, &e.cls));
        let b = mean.encode(&e.text).unwrap();
        assert!(max_abs_diff(&b, &e.mean) < 1e-4, "mean {}: {}", e.text, max_abs_diff(&b, &e.mean));
    }
}

#[test]
fn deterministic_and_empty_convention() {
    let model = DistilBert::load(&fixtures().join("tiny-distilbert"), Pooling::FirstToken).unwrap();
    let a = embed_message(&model, "I feel better").unwrap();
    let b = embed_message(&model, "I feel better").unwrap();
    assert_eq!(a, b);
    let e = embed_message(&model, "").unwrap();
    assert!(e.empty);
    assert_eq!(e.vector, vec![0.0; model.dim()]);
}
