//! The sequence regressor: FC projection of each message embedding, a GRU
//! stack over the thread, and a linear head on the final hidden state(s).

mod checkpoint;
mod gru;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, CheckpointMeta, FORMAT_VERSION};
pub use gru::{backward, build_input, forward, predict, predict_batch, sample_masks, Activations, DropoutMasks};

use crate::embed::EMBED_DIM;
use crate::threadsel::SEQ_CAP;

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite activation in {location}")]
    NonFiniteActivation { location: String },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Output width `o` of the projection layer.
    pub fc_out: usize,
    pub num_layers: usize,
    pub bidirectional: bool,
    /// Dropout between stacked GRU layers.
    pub dropout: f64,
    #[serde(default = "default_seq_cap")]
    pub seq_cap: usize,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
}

fn default_seq_cap() -> usize {
    SEQ_CAP
}

fn default_embed_dim() -> usize {
    EMBED_DIM
}

impl ModelConfig {
    pub fn new(fc_out: usize, num_layers: usize, bidirectional: bool, dropout: f64) -> Self {
        ModelConfig {
            fc_out,
            num_layers,
            bidirectional,
            dropout,
            seq_cap: SEQ_CAP,
            embed_dim: EMBED_DIM,
        }
    }

    /// Best configuration of the reference grid search.
    pub fn best() -> Self {
        Self::new(62, 2, false, 0.0)
    }

    /// `|x_m| = o + 2`.
    pub fn input_dim(&self) -> usize {
        self.fc_out + 2
    }

    pub fn hidden_dim(&self) -> usize {
        self.input_dim() / 2
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), RegressorError> {
        let bad = |m: String| Err(RegressorError::InvalidConfig(m));
        if self.fc_out == 0 || self.input_dim() % 2 != 0 {
            return bad(format!("fc_out {} must be positive and even", self.fc_out));
        }
        if self.num_layers == 0 {
            return bad("num_layers must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.num_layers == 1 && self.dropout != 0.0 {
            return bad("dropout needs a following layer".into());
        }
        if self.seq_cap == 0 || self.embed_dim == 0 {
            return bad("seq_cap and embed_dim must be positive".into());
        }
        Ok(())
    }

    /// Short label such as `o62-l2-uni-d0.0`.
    pub fn label(&self) -> String {
        format!(
            "o{}-l{}-{}-d{:.1}",
            self.fc_out,
            self.num_layers,
            if self.bidirectional { "bi" } else { "uni" },
            self.dropout
        )
    }
}

/// One message of `S` before projection: `(e_m, EmT(m), is_post_author(m))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub embedding: Vec<f32>,
    pub emt: f64,
    pub is_author: bool,
}

impl Step {
    pub fn padding(embed_dim: usize) -> Step {
        Step {
            embedding: vec![0.0; embed_dim],
            emt: 0.0,
            is_author: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub id: String,
    /// Rows past `len` are padding and never read.
    pub steps: Vec<Step>,
    pub len: usize,
    pub target: f64,
}

impl FeatureSequence {
    pub fn new(id: impl Into<String>, steps: Vec<Step>, target: f64) -> Self {
        let len = steps.len();
        FeatureSequence {
            id: id.into(),
            steps,
            len,
            target,
        }
    }

    pub fn valid(&self) -> &[Step] {
        &self.steps[..self.len]
    }

    /// Materialises zero rows up to `n` steps.
    pub fn padded(&self, n: usize, embed_dim: usize) -> FeatureSequence {
        let mut out = self.clone();
        while out.steps.len() < n {
            out.steps.push(Step::padding(embed_dim));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct GruOffsets {
    pub w_ih: usize,
    pub w_hh: usize,
    pub b_ih: usize,
    pub b_hh: usize,
    pub input: usize,
}

/// Where each tensor lives in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub specs: Vec<TensorSpec>,
    pub(crate) fc1_w: usize,
    pub(crate) fc1_b: usize,
    /// `[layer][direction]`
    pub(crate) gru: Vec<Vec<GruOffsets>>,
    pub(crate) fc2_w: usize,
    pub(crate) fc2_b: usize,
    pub len: usize,
}

impl Layout {
    /// PyTorch-style names, in the order `fc1`, `gru` (by layer, forward before reverse), `fc2`.
    pub fn new(config: &ModelConfig) -> Layout {
        let mut specs = Vec::new();
        let mut off = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let start = off;
            let spec = TensorSpec { name, shape, offset: start };
            off += spec.numel();
            specs.push(spec);
            start
        };
        let (o, e, h, d) = (config.fc_out, config.embed_dim, config.hidden_dim(), config.directions());
        let fc1_w = push("fc1.weight".into(), vec![o, e]);
        let fc1_b = push("fc1.bias".into(), vec![o]);
        let mut gru = Vec::new();
        for l in 0..config.num_layers {
            let input = if l == 0 { config.input_dim() } else { d * h };
            let mut dirs = Vec::new();
            for dir in 0..d {
                let sfx = if dir == 1 { "_reverse" } else { "" };
                dirs.push(GruOffsets {
                    w_ih: push(format!("gru.weight_ih_l{l}{sfx}"), vec![3 * h, input]),
                    w_hh: push(format!("gru.weight_hh_l{l}{sfx}"), vec![3 * h, h]),
                    b_ih: push(format!("gru.bias_ih_l{l}{sfx}"), vec![3 * h]),
                    b_hh: push(format!("gru.bias_hh_l{l}{sfx}"), vec![3 * h]),
                    input,
                });
            }
            gru.push(dirs);
        }
        let fc2_w = push("fc2.weight".into(), vec![1, d * h]);
        let fc2_b = push("fc2.bias".into(), vec![1]);
        Layout {
            specs,
            fc1_w,
            fc1_b,
            gru,
            fc2_w,
            fc2_b,
            len: off,
        }
    }

    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

/// All trainable parameters in one flat `f64` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self, RegressorError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let data = vec![0.0; layout.len];
        Ok(ModelParams { config, layout, data })
    }

    /// Uniform in `±1/sqrt(fan_in)` per tensor; biases use their weight's fan-in.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, RegressorError> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = p.layout.specs.clone();
        let mut fan_in = 1;
        for spec in &specs {
            if spec.shape.len() == 2 {
                fan_in = spec.shape[1];
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for v in &mut p.data[spec.offset..spec.offset + spec.numel()] {
                *v = dist.sample(&mut rng);
            }
        }
        Ok(p)
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let s = self.layout.spec(name)?;
        Some(&self.data[s.offset..s.offset + s.numel()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let s = self.layout.spec(name)?.clone();
        Some(&mut self.data[s.offset..s.offset + s.numel()])
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_config_parameter_count() {
        // fc1 62*768+62, layer 0: 96*64+96*32+2*96, layer 1: 96*32+96*32+2*96, fc2 32+1
        let p = ModelParams::zeros(ModelConfig::best()).unwrap();
        assert_eq!(p.num_params(), 47_678 + 9_408 + 6_336 + 33);
        assert_eq!(p.num_params(), 63_455);
        assert_eq!(ModelConfig::best().input_dim(), 64);
        assert_eq!(ModelConfig::best().hidden_dim(), 32);
    }

    #[test]
    fn config_rules() {
        assert!(ModelConfig::new(2, 1, false, 0.1).validate().is_err());
        assert!(ModelConfig::new(3, 1, false, 0.0).validate().is_err());
        assert!(ModelConfig::new(14, 2, true, 0.5).validate().is_ok());
    }

    #[test]
    fn layout_names_and_init_bounds() {
        let p = ModelParams::init(ModelConfig::new(2, 2, true, 0.0), 1).unwrap();
        assert!(p.tensor("gru.weight_ih_l1_reverse").is_some());
        assert_eq!(p.layout.spec("gru.weight_ih_l1").unwrap().shape, vec![6, 4]);
        let b = 1.0 / 768f64.sqrt();
        assert!(p.tensor("fc1.weight").unwrap().iter().all(|v| v.abs() <= b));
        assert_eq!(p, ModelParams::init(ModelConfig::new(2, 2, true, 0.0), 1).unwrap());
    }
}
