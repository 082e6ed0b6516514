//! Forward pass. Activations that the backward pass needs are cached in a
//! [`ForwardTrace`].

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{LayerNormParams, LinearParams};
use super::{ModelError, ModelParams};
use crate::tokenizer::EncodedBatch;

pub(super) const LN_EPS: f64 = 1e-12;
/// sqrt(2/pi), used by the tanh GELU approximation.
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC_COEF: f64 = 0.044_715;

pub(super) fn gelu(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC_COEF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

pub(super) fn gelu_prime(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_CUBIC_COEF * x * x * x);
    let t = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC_COEF * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// y = x W + b over the trailing axis.
pub(super) fn project(x: &Array3<f64>, linear: &LinearParams) -> Array3<f64> {
    let (b, l, h) = x.dim();
    let x2 = x
        .view()
        .into_shape_with_order((b * l, h))
        .expect("contiguous activations");
    let out = x2.dot(&linear.weight) + &linear.bias;
    let cols = linear.bias.len();
    out.into_shape_with_order((b, l, cols))
        .expect("projection output is contiguous")
}

#[derive(Debug)]
pub(super) struct LayerNormTrace {
    /// (x - mean) / std per token, before scale and shift.
    pub(super) normalized: Array3<f64>,
    pub(super) inv_std: Array2<f64>,
    pub(super) output: Array3<f64>,
}

pub(super) fn layer_norm(x: &Array3<f64>, params: &LayerNormParams) -> LayerNormTrace {
    let (b, l, h) = x.dim();
    let mut normalized = Array3::zeros((b, l, h));
    let mut inv_std = Array2::zeros((b, l));
    let mut output = Array3::zeros((b, l, h));
    for bi in 0..b {
        for li in 0..l {
            let row = x.slice(s![bi, li, ..]);
            let mean = row.sum() / h as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let istd = 1.0 / (var + LN_EPS).sqrt();
            inv_std[(bi, li)] = istd;
            for hi in 0..h {
                let n = (x[(bi, li, hi)] - mean) * istd;
                normalized[(bi, li, hi)] = n;
                output[(bi, li, hi)] = params.gamma[hi] * n + params.beta[hi];
            }
        }
    }
    LayerNormTrace {
        normalized,
        inv_std,
        output,
    }
}

/// Numerically stable row softmax. Entries at negative infinity become
/// exactly zero.
pub(super) fn softmax_rows_inplace(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Inverted-dropout scale mask: 0 with probability `rate`, else 1/(1-rate).
fn dropout_mask(rng: &mut ChaCha8Rng, dims: (usize, usize, usize), rate: f64) -> Array3<f64> {
    let keep_scale = 1.0 / (1.0 - rate);
    Array3::from_shape_simple_fn(dims, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep_scale
        }
    })
}

fn apply_optional_mask(x: &mut Array3<f64>, mask: &Option<Array3<f64>>) {
    if let Some(mask) = mask {
        *x *= mask;
    }
}

#[derive(Debug)]
pub(super) struct LayerTrace {
    pub(super) q: Array3<f64>,
    pub(super) k: Array3<f64>,
    pub(super) v: Array3<f64>,
    /// Post-softmax attention weights, (batch, head, query, key).
    pub(super) attn_probs: Array4<f64>,
    /// Head outputs concatenated, before the output projection.
    pub(super) context: Array3<f64>,
    pub(super) attn_dropout: Option<Array3<f64>>,
    pub(super) ln_attn: LayerNormTrace,
    /// Feed-forward pre-activation.
    pub(super) ff_pre: Array3<f64>,
    /// Feed-forward post-GELU activation.
    pub(super) ff_act: Array3<f64>,
    pub(super) ff_dropout: Option<Array3<f64>>,
    pub(super) ln_ff: LayerNormTrace,
}

/// Cached activations of one forward pass, sufficient for exact gradients.
#[derive(Debug)]
pub struct ForwardTrace {
    /// B x n_classes.
    pub logits: Array2<f64>,
    pub(super) embedded: Array3<f64>,
    pub(super) embed_dropout: Option<Array3<f64>>,
    pub(super) layers: Vec<LayerTrace>,
    pub(super) cls_hidden: Array2<f64>,
}

impl ForwardTrace {
    /// Input activations of encoder layer `idx`.
    pub(super) fn layer_input(&self, idx: usize) -> &Array3<f64> {
        if idx == 0 {
            &self.embedded
        } else {
            &self.layers[idx - 1].ln_ff.output
        }
    }
}

fn validate_batch(params: &ModelParams, batch: &EncodedBatch) -> Result<(), ModelError> {
    let config = &params.config;
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if batch.max_len != config.max_len {
        return Err(ModelError::ShapeMismatch {
            dimension: "max_len",
            expected: config.max_len,
            actual: batch.max_len,
        });
    }
    for (ids, mask) in batch.ids.iter().zip(&batch.mask) {
        if ids.len() != config.max_len {
            return Err(ModelError::ShapeMismatch {
                dimension: "sequence length",
                expected: config.max_len,
                actual: ids.len(),
            });
        }
        if mask.len() != config.max_len {
            return Err(ModelError::ShapeMismatch {
                dimension: "mask length",
                expected: config.max_len,
                actual: mask.len(),
            });
        }
        for &id in ids {
            if id as usize >= config.vocab_size {
                return Err(ModelError::TokenIdOutOfRange {
                    id,
                    vocab_size: config.vocab_size,
                });
            }
        }
    }
    Ok(())
}

/// Runs the encoder over a batch. With `train_mode` set, seeded dropout is
/// applied after the embedding sum and after each attention and feed-forward
/// block; otherwise the pass is deterministic in the parameters alone.
pub fn forward(
    params: &ModelParams,
    batch: &EncodedBatch,
    train_mode: bool,
    seed: u64,
) -> Result<ForwardTrace, ModelError> {
    validate_batch(params, batch)?;
    let config = &params.config;
    let (b_sz, l, h) = (batch.len(), config.max_len, config.hidden);
    let n_heads = config.n_heads;
    let d_head = config.head_dim();
    let use_dropout = train_mode && config.dropout_rate > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let next_mask = |rng: &mut ChaCha8Rng, dims| {
        if use_dropout {
            Some(dropout_mask(rng, dims, config.dropout_rate))
        } else {
            None
        }
    };

    // Token plus learned position embeddings.
    let mut embedded = Array3::zeros((b_sz, l, h));
    for (bi, ids) in batch.ids.iter().enumerate() {
        for (li, &id) in ids.iter().enumerate() {
            let row = &params.token_embedding.row(id as usize)
                + &params.position_embedding.row(li);
            embedded.slice_mut(s![bi, li, ..]).assign(&row);
        }
    }
    let embed_dropout = next_mask(&mut rng, (b_sz, l, h));
    apply_optional_mask(&mut embedded, &embed_dropout);

    let scale = 1.0 / (d_head as f64).sqrt();
    let mut layers = Vec::with_capacity(config.n_layers);
    let mut x = embedded.clone();
    for layer in &params.layers {
        let q = project(&x, &layer.query);
        let k = project(&x, &layer.key);
        let v = project(&x, &layer.value);

        let mut attn_probs = Array4::zeros((b_sz, n_heads, l, l));
        let mut context = Array3::zeros((b_sz, l, h));
        for bi in 0..b_sz {
            for head in 0..n_heads {
                let cols = s![.., head * d_head..(head + 1) * d_head];
                let q_bh = q.index_axis(Axis(0), bi);
                let q_bh = q_bh.slice(cols);
                let k_bh = k.index_axis(Axis(0), bi);
                let k_bh = k_bh.slice(cols);
                let v_bh = v.index_axis(Axis(0), bi);
                let v_bh = v_bh.slice(cols);

                let mut scores = q_bh.dot(&k_bh.t());
                scores *= scale;
                // PAD key positions are excluded from every query's view.
                for (j, &m) in batch.mask[bi].iter().enumerate() {
                    if m == 0 {
                        scores.column_mut(j).fill(f64::NEG_INFINITY);
                    }
                }
                softmax_rows_inplace(&mut scores);

                context
                    .slice_mut(s![bi, .., head * d_head..(head + 1) * d_head])
                    .assign(&scores.dot(&v_bh));
                attn_probs.slice_mut(s![bi, head, .., ..]).assign(&scores);
            }
        }

        let mut attn_out = project(&context, &layer.output);
        let attn_dropout = next_mask(&mut rng, (b_sz, l, h));
        apply_optional_mask(&mut attn_out, &attn_dropout);
        let res_attn = &x + &attn_out;
        let ln_attn = layer_norm(&res_attn, &layer.ln_attn);

        let ff_pre = project(&ln_attn.output, &layer.ff_expand);
        let ff_act = ff_pre.mapv(gelu);
        let mut ff_out = project(&ff_act, &layer.ff_contract);
        let ff_dropout = next_mask(&mut rng, (b_sz, l, h));
        apply_optional_mask(&mut ff_out, &ff_dropout);
        let res_ff = &ln_attn.output + &ff_out;
        let ln_ff = layer_norm(&res_ff, &layer.ln_ff);

        x = ln_ff.output.clone();
        layers.push(LayerTrace {
            q,
            k,
            v,
            attn_probs,
            context,
            attn_dropout,
            ln_attn,
            ff_pre,
            ff_act,
            ff_dropout,
            ln_ff,
        });
    }

    // Classification reads the hidden state at the leading [CLS] position.
    let cls_hidden: Array2<f64> = x.slice(s![.., 0, ..]).to_owned();
    let logits = cls_hidden.dot(&params.classifier.weight) + &params.classifier.bias;

    Ok(ForwardTrace {
        logits,
        embedded,
        embed_dropout,
        layers,
        cls_hidden,
    })
}

/// Row softmax of the logits as an owned array.
pub(super) fn softmax_logits(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    softmax_rows_inplace(&mut probs);
    probs
}

/// Per-row attention weight sums over non-PAD keys; used by invariants.
#[cfg(test)]
pub(super) fn attention_row_sums(trace: &ForwardTrace) -> Vec<f64> {
    let mut sums = Vec::new();
    for layer in &trace.layers {
        for row in layer.attn_probs.rows() {
            sums.push(row.sum());
        }
    }
    sums
}
