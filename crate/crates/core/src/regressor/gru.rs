//! Forward pass and backpropagation through time.
//!
//! Gate convention follows the common GRU formulation with reset applied to
//! the projected hidden state:
//! r = σ(W_ir x + b_ir + W_hr h + b_hr), z = σ(W_iz x + b_iz + W_hz h + b_hz),
//! n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn)), h' = (1 − z) ⊙ n + z ⊙ h.

use rand::Rng;
use rayon::prelude::*;

use super::{FeatureSequence, GruOffsets, ModelConfig, ModelParams, RegressorError, Step};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = W x + b` for a row-major `rows × cols` matrix.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o = b[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn affine_f32(w: &[f64], b: &[f64], x: &[f32], out: &mut [f64]) {
    let cols = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o = b[i] + row.iter().zip(x).map(|(a, &b)| a * b as f64).sum::<f64>();
    }
}

/// `dw += g ⊗ x`
fn outer_acc(dw: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, gi) in g.iter().enumerate() {
        if *gi == 0.0 {
            continue;
        }
        for (d, xv) in dw[i * cols..(i + 1) * cols].iter_mut().zip(x) {
            *d += gi * xv;
        }
    }
}

/// `dx += Wᵀ g`
fn transpose_acc(w: &[f64], g: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (i, gi) in g.iter().enumerate() {
        if *gi == 0.0 {
            continue;
        }
        for (d, wv) in dx.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *d += gi * wv;
        }
    }
}

/// Model input `x_m = [FC(e_m), EmT(m), is_post_author(m)]`.
pub fn build_input(params: &ModelParams, step: &Step) -> Result<Vec<f64>, RegressorError> {
    let c = &params.config;
    if step.embedding.len() != c.embed_dim {
        return Err(RegressorError::DimensionMismatch {
            expected: c.embed_dim,
            found: step.embedding.len(),
        });
    }
    let l = &params.layout;
    let p = &params.data;
    let o = c.fc_out;
    let mut x = vec![0.0; o + 2];
    affine_f32(&p[l.fc1_w..l.fc1_w + o * c.embed_dim], &p[l.fc1_b..l.fc1_b + o], &step.embedding, &mut x[..o]);
    x[o] = step.emt;
    x[o + 1] = if step.is_author { 1.0 } else { 0.0 };
    Ok(x)
}

/// Inverted dropout masks, `[boundary][step][feature]`, values 0 or 1/(1-p).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub masks: Vec<Vec<Vec<f64>>>,
}

/// Samples masks for one sequence of length `len`; `None` when dropout is off.
pub fn sample_masks<R: Rng>(config: &ModelConfig, len: usize, rng: &mut R) -> Option<DropoutMasks> {
    if config.dropout == 0.0 || config.num_layers < 2 {
        return None;
    }
    let keep = 1.0 - config.dropout;
    let width = config.directions() * config.hidden_dim();
    let masks = (0..config.num_layers - 1)
        .map(|_| {
            (0..len)
                .map(|_| {
                    (0..width)
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect()
                })
                .collect()
        })
        .collect();
    Some(DropoutMasks { masks })
}

#[derive(Debug, Clone, Default)]
struct DirTrace {
    /// Indexed by processing step `k`; time index is `order[k]`.
    order: Vec<usize>,
    h_prev: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    /// `W_hn h + b_hn`
    hn: Vec<Vec<f64>>,
    /// Hidden state after consuming time index `t`.
    h_at: Vec<Vec<f64>>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// `x_m` per step, before the GRU.
    inputs: Vec<Vec<f64>>,
    /// Input to each layer per step (after dropout for layers above 0).
    layer_in: Vec<Vec<Vec<f64>>>,
    dirs: Vec<Vec<DirTrace>>,
    feature: Vec<f64>,
    pub output: f64,
}

fn run_direction(p: &[f64], g: &GruOffsets, hdim: usize, xs: &[Vec<f64>], reverse: bool) -> DirTrace {
    let len = xs.len();
    let w_ih = &p[g.w_ih..g.w_ih + 3 * hdim * g.input];
    let w_hh = &p[g.w_hh..g.w_hh + 3 * hdim * hdim];
    let b_ih = &p[g.b_ih..g.b_ih + 3 * hdim];
    let b_hh = &p[g.b_hh..g.b_hh + 3 * hdim];
    let mut tr = DirTrace {
        h_at: vec![Vec::new(); len],
        ..Default::default()
    };
    let mut h = vec![0.0; hdim];
    let mut gi = vec![0.0; 3 * hdim];
    let mut gh = vec![0.0; 3 * hdim];
    for k in 0..len {
        let t = if reverse { len - 1 - k } else { k };
        affine(w_ih, b_ih, &xs[t], &mut gi);
        affine(w_hh, b_hh, &h, &mut gh);
        let mut r = vec![0.0; hdim];
        let mut z = vec![0.0; hdim];
        let mut n = vec![0.0; hdim];
        let mut next = vec![0.0; hdim];
        for j in 0..hdim {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[hdim + j] + gh[hdim + j]);
            n[j] = (gi[2 * hdim + j] + r[j] * gh[2 * hdim + j]).tanh();
            next[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
        }
        tr.order.push(t);
        tr.h_prev.push(std::mem::replace(&mut h, next));
        tr.r.push(r);
        tr.z.push(z);
        tr.n.push(n);
        tr.hn.push(gh[2 * hdim..].to_vec());
        tr.h_at[t] = h.clone();
    }
    tr
}

fn first_non_finite(act: &Activations) -> Option<String> {
    for (t, x) in act.inputs.iter().enumerate() {
        if x.iter().any(|v| !v.is_finite()) {
            return Some(format!("input projection at step {t}"));
        }
    }
    for (l, dirs) in act.dirs.iter().enumerate() {
        for (d, tr) in dirs.iter().enumerate() {
            for (t, h) in tr.h_at.iter().enumerate() {
                if h.iter().any(|v| !v.is_finite()) {
                    return Some(format!("GRU layer {l} direction {d} step {t}"));
                }
            }
        }
    }
    None
}

/// Runs the model on the valid prefix of `seq`.
///
/// Unidirectional models read the hidden state at the last valid step;
/// bidirectional ones concatenate that with the backward state at step 0.
pub fn forward(params: &ModelParams, seq: &FeatureSequence, masks: Option<&DropoutMasks>) -> Result<Activations, RegressorError> {
    let c = &params.config;
    let lay = &params.layout;
    let p = &params.data;
    let steps = &seq.valid()[..seq.len.min(c.seq_cap)];
    if steps.is_empty() {
        return Err(RegressorError::DimensionMismatch { expected: 1, found: 0 });
    }
    let hdim = c.hidden_dim();
    let ndir = c.directions();
    let inputs = steps.iter().map(|s| build_input(params, s)).collect::<Result<Vec<_>, _>>()?;
    let len = inputs.len();

    let mut layer_in = Vec::with_capacity(c.num_layers);
    let mut dirs_all = Vec::with_capacity(c.num_layers);
    let mut xs = inputs.clone();
    for l in 0..c.num_layers {
        let dirs: Vec<DirTrace> = (0..ndir).map(|d| run_direction(p, &lay.gru[l][d], hdim, &xs, d == 1)).collect();
        let mut out: Vec<Vec<f64>> = (0..len)
            .map(|t| dirs.iter().flat_map(|tr| tr.h_at[t].iter().copied()).collect())
            .collect();
        if l + 1 < c.num_layers {
            if let Some(m) = masks {
                for (t, row) in out.iter_mut().enumerate() {
                    for (v, k) in row.iter_mut().zip(&m.masks[l][t]) {
                        *v *= k;
                    }
                }
            }
        }
        layer_in.push(std::mem::replace(&mut xs, out));
        dirs_all.push(dirs);
    }

    let top = dirs_all.last().unwrap();
    let mut feature = top[0].h_at[len - 1].clone();
    if ndir == 2 {
        feature.extend_from_slice(&top[1].h_at[0]);
    }
    let w2 = &p[lay.fc2_w..lay.fc2_w + feature.len()];
    let output = p[lay.fc2_b] + w2.iter().zip(&feature).map(|(a, b)| a * b).sum::<f64>();
    let act = Activations {
        inputs,
        layer_in,
        dirs: dirs_all,
        feature,
        output,
    };
    if !output.is_finite() {
        let location = first_non_finite(&act).unwrap_or_else(|| "output head".into());
        return Err(RegressorError::NonFiniteActivation { location });
    }
    Ok(act)
}

/// Eval-mode prediction for one sequence.
pub fn predict(params: &ModelParams, seq: &FeatureSequence) -> Result<f64, RegressorError> {
    forward(params, seq, None).map(|a| a.output)
}

pub fn predict_batch(params: &ModelParams, seqs: &[FeatureSequence]) -> Result<Vec<f64>, RegressorError> {
    seqs.par_iter().map(|s| predict(params, s)).collect()
}

/// Accumulates `dy · ∂ŷ/∂θ` into `grad`.
pub fn backward(
    params: &ModelParams,
    seq: &FeatureSequence,
    act: &Activations,
    masks: Option<&DropoutMasks>,
    dy: f64,
    grad: &mut [f64],
) {
    let c = &params.config;
    let lay = &params.layout;
    let p = &params.data;
    let hdim = c.hidden_dim();
    let ndir = c.directions();
    let len = act.inputs.len();
    let width = ndir * hdim;

    // head
    for (gw, f) in grad[lay.fc2_w..lay.fc2_w + width].iter_mut().zip(&act.feature) {
        *gw += dy * f;
    }
    grad[lay.fc2_b] += dy;
    let w2 = &p[lay.fc2_w..lay.fc2_w + width];
    let mut d_out = vec![vec![0.0; width]; len];
    for j in 0..hdim {
        d_out[len - 1][j] += dy * w2[j];
        if ndir == 2 {
            d_out[0][hdim + j] += dy * w2[hdim + j];
        }
    }

    for l in (0..c.num_layers).rev() {
        let xs = &act.layer_in[l];
        let in_dim = xs[0].len();
        let mut dx = vec![vec![0.0; in_dim]; len];
        for d in 0..ndir {
            let g = &lay.gru[l][d];
            let tr = &act.dirs[l][d];
            let w_ih = &p[g.w_ih..g.w_ih + 3 * hdim * in_dim];
            let w_hh = &p[g.w_hh..g.w_hh + 3 * hdim * hdim];
            let mut dh_next = vec![0.0; hdim];
            let mut g_in = vec![0.0; 3 * hdim];
            let mut g_h = vec![0.0; 3 * hdim];
            for k in (0..len).rev() {
                let t = tr.order[k];
                let (r, z, n, hn, hp) = (&tr.r[k], &tr.z[k], &tr.n[k], &tr.hn[k], &tr.h_prev[k]);
                let mut dh_prev = vec![0.0; hdim];
                for j in 0..hdim {
                    let dh = dh_next[j] + d_out[t][d * hdim + j];
                    let dn = dh * (1.0 - z[j]);
                    let dz = dh * (hp[j] - n[j]);
                    dh_prev[j] = dh * z[j];
                    let da_n = dn * (1.0 - n[j] * n[j]);
                    let dr = da_n * hn[j];
                    let da_r = dr * r[j] * (1.0 - r[j]);
                    let da_z = dz * z[j] * (1.0 - z[j]);
                    g_in[j] = da_r;
                    g_in[hdim + j] = da_z;
                    g_in[2 * hdim + j] = da_n;
                    g_h[j] = da_r;
                    g_h[hdim + j] = da_z;
                    g_h[2 * hdim + j] = da_n * r[j];
                }
                outer_acc(&mut grad[g.w_ih..g.w_ih + 3 * hdim * in_dim], &g_in, &xs[t]);
                for (a, b) in grad[g.b_ih..g.b_ih + 3 * hdim].iter_mut().zip(&g_in) {
                    *a += b;
                }
                outer_acc(&mut grad[g.w_hh..g.w_hh + 3 * hdim * hdim], &g_h, hp);
                for (a, b) in grad[g.b_hh..g.b_hh + 3 * hdim].iter_mut().zip(&g_h) {
                    *a += b;
                }
                transpose_acc(w_ih, &g_in, &mut dx[t]);
                transpose_acc(w_hh, &g_h, &mut dh_prev);
                dh_next = dh_prev;
            }
        }
        if l > 0 {
            if let Some(m) = masks {
                for (t, row) in dx.iter_mut().enumerate() {
                    for (v, k) in row.iter_mut().zip(&m.masks[l - 1][t]) {
                        *v *= k;
                    }
                }
            }
            d_out = dx;
        } else {
            let o = c.fc_out;
            let e = c.embed_dim;
            for (t, step) in seq.valid()[..len].iter().enumerate() {
                let dfc = &dx[t][..o];
                let gw = &mut grad[lay.fc1_w..lay.fc1_w + o * e];
                for (i, gi) in dfc.iter().enumerate() {
                    if *gi == 0.0 {
                        continue;
                    }
                    for (a, &v) in gw[i * e..(i + 1) * e].iter_mut().zip(&step.embedding) {
                        *a += gi * v as f64;
                    }
                }
                for (a, b) in grad[lay.fc1_b..lay.fc1_b + o].iter_mut().zip(dfc) {
                    *a += b;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(bi: bool, layers: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: 5,
            ..ModelConfig::new(2, layers, bi, 0.0)
        }
    }

    fn random_seq(rng: &mut ChaCha8Rng, len: usize, e: usize) -> FeatureSequence {
        let steps = (0..len)
            .map(|i| Step {
                embedding: (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                emt: rng.gen_range(-1.0..1.0),
                is_author: i % 2 == 0,
            })
            .collect();
        FeatureSequence::new("s", steps, rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_params_give_head_bias() {
        let mut p = ModelParams::zeros(tiny(true, 2)).unwrap();
        *p.tensor_mut("fc2.bias").unwrap().first_mut().unwrap() = 0.25;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq = random_seq(&mut rng, 4, 5);
        let act = forward(&p, &seq, None).unwrap();
        assert_eq!(act.output, 0.25);
        // zero weights keep every hidden state at zero
        assert!(act.feature.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn one_hot_projection_selects_coordinates() {
        let mut p = ModelParams::zeros(tiny(false, 1)).unwrap();
        let w = p.tensor_mut("fc1.weight").unwrap();
        w[3] = 1.0; // row 0 picks e[3]
        w[5 + 1] = 1.0; // row 1 picks e[1]
        let step = Step {
            embedding: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            emt: -0.3,
            is_author: true,
        };
        let x = build_input(&p, &step).unwrap();
        assert_eq!(x, vec![0.4f32 as f64, 0.2f32 as f64, -0.3, 1.0]);
        let bad = Step {
            embedding: vec![0.0; 4],
            ..step
        };
        assert!(matches!(build_input(&p, &bad), Err(RegressorError::DimensionMismatch { .. })));
    }

    #[test]
    fn padding_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for bi in [false, true] {
            let p = ModelParams::init(tiny(bi, 2), 3).unwrap();
            let seq = random_seq(&mut rng, 3, 5);
            let padded = seq.padded(8, 5);
            let a = forward(&p, &seq, None).unwrap();
            let b = forward(&p, &padded, None).unwrap();
            assert_eq!(a.output, b.output);
            let mut ga = vec![0.0; p.num_params()];
            let mut gb = vec![0.0; p.num_params()];
            backward(&p, &seq, &a, None, 1.0, &mut ga);
            backward(&p, &padded, &b, None, 1.0, &mut gb);
            assert_eq!(ga, gb);
        }
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::init(ModelConfig { dropout: 0.5, ..tiny(false, 2) }, 0).unwrap();
        let seq = random_seq(&mut rng, 5, 5);
        assert_eq!(predict(&p, &seq).unwrap(), predict(&p, &seq).unwrap());
    }

    #[test]
    fn non_finite_is_reported() {
        let mut p = ModelParams::init(tiny(false, 1), 0).unwrap();
        p.tensor_mut("fc1.bias").unwrap()[0] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seq = random_seq(&mut rng, 3, 5);
        match forward(&p, &seq, None) {
            Err(RegressorError::NonFiniteActivation { location }) => assert!(location.contains("input projection")),
            other => panic!("{other:?}"),
        }
    }
}
