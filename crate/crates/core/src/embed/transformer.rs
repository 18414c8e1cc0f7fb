//! DistilBERT encoder forward pass over Hugging Face style model assets.

use std::path::{Path, PathBuf};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};
use tokenizers::models::wordpiece::WordPiece;
use tokenizers::normalizers::bert::BertNormalizer;
use tokenizers::pre_tokenizers::bert::BertPreTokenizer;
use tokenizers::processors::bert::BertProcessing;
use tokenizers::{Tokenizer, TruncationParams};

use super::{EmbedError, EmbeddingProvider};

/// Names the directory holding `config.json`, `model.safetensors` and
/// `vocab.txt` (or `tokenizer.json`).
pub const MODEL_DIR_ENV: &str = "TONESHIFT_MODEL_DIR";

const LN_EPS: f32 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Final hidden state of the first (`[CLS]`) token.
    #[default]
    FirstToken,
    Mean,
}

#[derive(Debug, Clone, Deserialize)]
struct Config {
    dim: usize,
    n_layers: usize,
    n_heads: usize,
    hidden_dim: usize,
    max_position_embeddings: usize,
    #[serde(default = "default_activation")]
    activation: String,
}

fn default_activation() -> String {
    "gelu".into()
}

struct Linear {
    /// `[out, in]`, as stored.
    w: Array2<f32>,
    b: Array1<f32>,
}

impl Linear {
    fn apply(&self, x: ArrayView2<f32>) -> Array2<f32> {
        x.dot(&self.w.t()) + &self.b
    }
}

struct LayerNorm {
    gamma: Array1<f32>,
    beta: Array1<f32>,
}

impl LayerNorm {
    fn apply(&self, x: &mut Array2<f32>) {
        let n = x.ncols() as f32;
        for mut row in x.rows_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for (i, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gamma[i] + self.beta[i];
            }
        }
    }
}

struct Block {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    sa_ln: LayerNorm,
    lin1: Linear,
    lin2: Linear,
    out_ln: LayerNorm,
}

pub struct DistilBert {
    config: Config,
    tokenizer: Tokenizer,
    word: Array2<f32>,
    position: Array2<f32>,
    emb_ln: LayerNorm,
    blocks: Vec<Block>,
    pooling: Pooling,
    id: String,
}

impl std::fmt::Debug for DistilBert {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistilBert").field("id", &self.id).field("config", &self.config).finish()
    }
}

fn unavailable(what: impl std::fmt::Display) -> EmbedError {
    EmbedError::ProviderUnavailable(what.to_string())
}

struct Weights<'a> {
    st: SafeTensors<'a>,
    prefix: &'static str,
}

impl Weights<'_> {
    fn tensor(&self, name: &str) -> Result<(Vec<usize>, Vec<f32>), EmbedError> {
        let full = format!("{}{name}", self.prefix);
        let t = self.st.tensor(&full).map_err(|e| unavailable(format!("tensor {full}: {e}")))?;
        if t.dtype() != Dtype::F32 {
            return Err(unavailable(format!("tensor {full} has dtype {:?}, expected F32", t.dtype())));
        }
        let data = t
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((t.shape().to_vec(), data))
    }

    fn matrix(&self, name: &str, rows: usize, cols: usize) -> Result<Array2<f32>, EmbedError> {
        let (shape, data) = self.tensor(name)?;
        if shape != [rows, cols] {
            return Err(unavailable(format!("{name}: shape {shape:?}, expected [{rows}, {cols}]")));
        }
        Ok(Array2::from_shape_vec((rows, cols), data).unwrap())
    }

    fn vector(&self, name: &str, len: usize) -> Result<Array1<f32>, EmbedError> {
        let (shape, data) = self.tensor(name)?;
        if shape != [len] {
            return Err(unavailable(format!("{name}: shape {shape:?}, expected [{len}]")));
        }
        Ok(Array1::from(data))
    }

    fn linear(&self, name: &str, out: usize, inp: usize) -> Result<Linear, EmbedError> {
        Ok(Linear {
            w: self.matrix(&format!("{name}.weight"), out, inp)?,
            b: self.vector(&format!("{name}.bias"), out)?,
        })
    }

    fn layer_norm(&self, name: &str, dim: usize) -> Result<LayerNorm, EmbedError> {
        Ok(LayerNorm {
            gamma: self.vector(&format!("{name}.weight"), dim)?,
            beta: self.vector(&format!("{name}.bias"), dim)?,
        })
    }
}

fn load_tokenizer(dir: &Path, max_len: usize) -> Result<Tokenizer, EmbedError> {
    let json = dir.join("tokenizer.json");
    let mut tok = if json.exists() {
        Tokenizer::from_file(&json).map_err(|e| unavailable(format!("{}: {e}", json.display())))?
    } else {
        let vocab = dir.join("vocab.txt");
        let vocab_str = vocab.to_str().ok_or_else(|| unavailable("non UTF-8 vocab path"))?;
        let wp = WordPiece::from_file(vocab_str)
            .unk_token("[UNK]".into())
            .build()
            .map_err(|e| unavailable(format!("{}: {e}", vocab.display())))?;
        let id = |t: &str| wp_token(&wp, t);
        let (cls, sep) = (id("[CLS]")?, id("[SEP]")?);
        let mut tok = Tokenizer::new(wp);
        tok.with_normalizer(Some(BertNormalizer::new(true, true, None, true)))
            .map_err(|e| unavailable(e.to_string()))?;
        tok.with_pre_tokenizer(Some(BertPreTokenizer));
        tok.with_post_processor(Some(BertProcessing::new(("[SEP]".into(), sep), ("[CLS]".into(), cls))));
        tok
    };
    tok.with_truncation(Some(TruncationParams {
        max_length: max_len,
        ..Default::default()
    }))
    .map_err(|e| unavailable(e.to_string()))?;
    tok.with_padding(None);
    Ok(tok)
}

fn wp_token(wp: &WordPiece, token: &str) -> Result<u32, EmbedError> {
    use tokenizers::Model;
    wp.token_to_id(token).ok_or_else(|| unavailable(format!("vocabulary lacks {token}")))
}

impl DistilBert {
    /// Loads from the directory named by [`MODEL_DIR_ENV`].
    pub fn from_env(pooling: Pooling) -> Result<Self, EmbedError> {
        let dir = std::env::var_os(MODEL_DIR_ENV).ok_or_else(|| unavailable(format!("{MODEL_DIR_ENV} is not set")))?;
        Self::load(&PathBuf::from(dir), pooling)
    }

    pub fn load(dir: &Path, pooling: Pooling) -> Result<Self, EmbedError> {
        let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| unavailable(format!("{}: {e}", dir.join(name).display())));
        let config: Config = serde_json::from_slice(&read("config.json")?).map_err(|e| unavailable(format!("config.json: {e}")))?;
        if config.activation != "gelu" {
            return Err(unavailable(format!("unsupported activation {}", config.activation)));
        }
        if config.n_heads == 0 || config.dim % config.n_heads != 0 {
            return Err(unavailable("dim is not divisible by n_heads"));
        }
        let bytes = read("model.safetensors")?;
        let st = SafeTensors::deserialize(&bytes).map_err(|e| unavailable(format!("model.safetensors: {e}")))?;
        let prefix = if st.names().iter().any(|n| n.starts_with("distilbert.")) { "distilbert." } else { "" };
        let w = Weights { st, prefix };
        let (d, h) = (config.dim, config.hidden_dim);
        let (vocab_rows, _) = w.tensor("embeddings.word_embeddings.weight").map(|(s, _)| (s[0], ()))?;
        let word = w.matrix("embeddings.word_embeddings.weight", vocab_rows, d)?;
        let position = w.matrix("embeddings.position_embeddings.weight", config.max_position_embeddings, d)?;
        let emb_ln = w.layer_norm("embeddings.LayerNorm", d)?;
        let mut blocks = Vec::with_capacity(config.n_layers);
        for i in 0..config.n_layers {
            let p = format!("transformer.layer.{i}");
            blocks.push(Block {
                q: w.linear(&format!("{p}.attention.q_lin"), d, d)?,
                k: w.linear(&format!("{p}.attention.k_lin"), d, d)?,
                v: w.linear(&format!("{p}.attention.v_lin"), d, d)?,
                out: w.linear(&format!("{p}.attention.out_lin"), d, d)?,
                sa_ln: w.layer_norm(&format!("{p}.sa_layer_norm"), d)?,
                lin1: w.linear(&format!("{p}.ffn.lin1"), h, d)?,
                lin2: w.linear(&format!("{p}.ffn.lin2"), d, h)?,
                out_ln: w.layer_norm(&format!("{p}.output_layer_norm"), d)?,
            });
        }
        let tokenizer = load_tokenizer(dir, config.max_position_embeddings)?;
        let digest = crate::jsonl::sha256_hex(&bytes);
        let pool = match pooling {
            Pooling::FirstToken => "cls",
            Pooling::Mean => "mean",
        };
        Ok(DistilBert {
            id: format!("distilbert-{pool}-{}", &digest[..12]),
            config,
            tokenizer,
            word,
            position,
            emb_ln,
            blocks,
            pooling,
        })
    }

    pub fn token_ids(&self, text: &str) -> Result<Vec<u32>, EmbedError> {
        let enc = self
            .tokenizer
            .encode(text, true)
            .map_err(|e| EmbedError::EncodeFailure(e.to_string()))?;
        Ok(enc.get_ids().to_vec())
    }

    /// Final-layer hidden states, one row per token.
    pub fn hidden_states(&self, ids: &[u32]) -> Result<Array2<f32>, EmbedError> {
        let d = self.config.dim;
        let n = ids.len();
        if n == 0 || n > self.config.max_position_embeddings {
            return Err(EmbedError::EncodeFailure(format!("{n} tokens")));
        }
        let mut x = Array2::<f32>::zeros((n, d));
        for (i, &id) in ids.iter().enumerate() {
            let id = id as usize;
            if id >= self.word.nrows() {
                return Err(EmbedError::EncodeFailure(format!("token id {id} out of range")));
            }
            let row = &self.word.row(id) + &self.position.row(i);
            x.row_mut(i).assign(&row);
        }
        self.emb_ln.apply(&mut x);

        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f32).sqrt();
        for b in &self.blocks {
            let q = b.q.apply(x.view()) * scale;
            let k = b.k.apply(x.view());
            let v = b.v.apply(x.view());
            let mut ctx = Array2::<f32>::zeros((n, d));
            for hd in 0..heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t());
                for mut row in scores.rows_mut() {
                    let m = row.fold(f32::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|s| (s - m).exp());
                    let z = row.sum();
                    row /= z;
                }
                ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            }
            let mut h = b.out.apply(ctx.view()) + &x;
            b.sa_ln.apply(&mut h);
            let mut f = b.lin1.apply(h.view());
            f.mapv_inplace(|u| 0.5 * u * (1.0 + libm::erff(u / std::f32::consts::SQRT_2)));
            let mut y = b.lin2.apply(f.view()) + &h;
            b.out_ln.apply(&mut y);
            x = y;
        }
        Ok(x)
    }
}

impl EmbeddingProvider for DistilBert {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let ids = self.token_ids(text)?;
        let h = self.hidden_states(&ids)?;
        let pooled = match self.pooling {
            Pooling::FirstToken => h.row(0).to_owned(),
            Pooling::Mean => h.mean_axis(Axis(0)).unwrap(),
        };
        Ok(pooled.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_assets_are_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(DistilBert::load(dir.path(), Pooling::FirstToken), Err(EmbedError::ProviderUnavailable(_))));
    }
}
