//! Shared inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toneshift_core::regressor::{FeatureSequence, Step};
use toneshift_core::serve::{PredictRequest, ThreadMessage};
use toneshift_core::synth::toned_text;

/// A thread of `n` synthetic messages, every fourth by the author.
pub fn request(n: usize, seed: u64) -> PredictRequest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PredictRequest {
        messages: (0..n)
            .map(|i| {
                let bias = rng.gen_range(-1.0..1.0);
                ThreadMessage {
                    text: toned_text(&mut rng, bias),
                    author: if i % 4 == 0 { "op".into() } else { format!("c{i}") },
                    created_utc: i as i64,
                }
            })
            .collect(),
        post_author: "op".into(),
        draft: None,
    }
}

pub fn sequence(len: usize, dim: usize, seed: u64) -> FeatureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (0..len)
        .map(|j| Step {
            embedding: (0..dim).map(|_| rng.gen_range(-0.1f32..0.1)).collect(),
            emt: rng.gen_range(-1.0..1.0),
            is_author: j % 3 == 0,
        })
        .collect();
    FeatureSequence::new("bench", steps, rng.gen_range(-1.0..1.0))
}
