//! Exact analytic gradients of the mean cross-entropy loss with respect to
//! every parameter, computed from a [`ForwardTrace`].

use ndarray::{s, Array2, Array3, Axis};

use super::forward::{forward, gelu_prime, softmax_logits, LayerNormTrace};
use super::params::{LayerNormParams, LinearParams};
use super::{ModelError, ModelParams};
use crate::tokenizer::EncodedBatch;

/// Mean cross-entropy over integer class labels, plus its logit gradient
/// (already divided by the batch size).
fn cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
) -> Result<(f64, Array2<f64>), ModelError> {
    for &label in labels {
        if label >= n_classes {
            return Err(ModelError::LabelOutOfRange { label, n_classes });
        }
    }
    let batch = labels.len() as f64;
    let mut dlogits = softmax_logits(logits);
    let mut loss = 0.0;
    for (row, &label) in labels.iter().enumerate() {
        loss -= dlogits[(row, label)].ln();
        dlogits[(row, label)] -= 1.0;
    }
    loss /= batch;
    if !loss.is_finite() {
        return Err(ModelError::NonFiniteLoss);
    }
    dlogits /= batch;
    Ok((loss, dlogits))
}

/// Accumulates the weight and bias gradients of `y = x W + b` and returns
/// the input gradient.
fn linear_backward(
    x: &Array3<f64>,
    d_out: &Array3<f64>,
    linear: &LinearParams,
    grad: &mut LinearParams,
) -> Array3<f64> {
    let (b, l, in_dim) = x.dim();
    let out_dim = d_out.dim().2;
    let x2 = x
        .view()
        .into_shape_with_order((b * l, in_dim))
        .expect("contiguous");
    let d2 = d_out
        .view()
        .into_shape_with_order((b * l, out_dim))
        .expect("contiguous");
    grad.weight += &x2.t().dot(&d2);
    grad.bias += &d2.sum_axis(Axis(0));
    d2.dot(&linear.weight.t())
        .into_shape_with_order((b, l, in_dim))
        .expect("contiguous")
}

/// Per-token layer-norm backward. Accumulates gamma/beta gradients and
/// returns the gradient with respect to the pre-normalization input.
fn layer_norm_backward(
    d_out: &Array3<f64>,
    trace: &LayerNormTrace,
    params: &LayerNormParams,
    grad: &mut LayerNormParams,
) -> Array3<f64> {
    let (b, l, h) = d_out.dim();
    let inv_h = 1.0 / h as f64;
    let mut d_in = Array3::zeros((b, l, h));
    let mut d_normalized = vec![0.0; h];
    for bi in 0..b {
        for li in 0..l {
            let istd = trace.inv_std[(bi, li)];
            let mut mean_dn = 0.0;
            let mut mean_dn_n = 0.0;
            for hi in 0..h {
                let dy = d_out[(bi, li, hi)];
                let n = trace.normalized[(bi, li, hi)];
                grad.gamma[hi] += dy * n;
                grad.beta[hi] += dy;
                let dn = dy * params.gamma[hi];
                d_normalized[hi] = dn;
                mean_dn += dn;
                mean_dn_n += dn * n;
            }
            mean_dn *= inv_h;
            mean_dn_n *= inv_h;
            for hi in 0..h {
                let n = trace.normalized[(bi, li, hi)];
                d_in[(bi, li, hi)] = istd * (d_normalized[hi] - mean_dn - n * mean_dn_n);
            }
        }
    }
    d_in
}

fn masked(grad: &Array3<f64>, mask: &Option<Array3<f64>>) -> Array3<f64> {
    match mask {
        Some(mask) => grad * mask,
        None => grad.clone(),
    }
}

/// Runs a forward pass and backpropagates the mean cross-entropy loss.
/// Returns the loss and a parameter-shaped gradient container.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &EncodedBatch,
    train_mode: bool,
    seed: u64,
) -> Result<(f64, ModelParams), ModelError> {
    let trace = forward(params, batch, train_mode, seed)?;
    let config = &params.config;
    let (loss, dlogits) = cross_entropy(&trace.logits, &batch.labels, config.n_classes)?;

    let mut grads = ModelParams::zeros_like(config);
    let (b_sz, l, h) = trace.embedded.dim();
    let n_heads = config.n_heads;
    let d_head = config.head_dim();
    let scale = 1.0 / (d_head as f64).sqrt();

    // Classifier head.
    grads.classifier.weight += &trace.cls_hidden.t().dot(&dlogits);
    grads.classifier.bias += &dlogits.sum_axis(Axis(0));
    let d_cls = dlogits.dot(&params.classifier.weight.t());

    // Only the [CLS] position feeds the head.
    let mut d_x = Array3::zeros((b_sz, l, h));
    d_x.slice_mut(s![.., 0, ..]).assign(&d_cls);

    for (idx, layer) in params.layers.iter().enumerate().rev() {
        let t = &trace.layers[idx];
        let g = &mut grads.layers[idx];
        let layer_input = trace.layer_input(idx);

        // out = LN2(y + dropout(W2 gelu(W1 y))).
        let d_res_ff = layer_norm_backward(&d_x, &t.ln_ff, &layer.ln_ff, &mut g.ln_ff);
        let d_ff_out = masked(&d_res_ff, &t.ff_dropout);
        let mut d_y = d_res_ff;

        let d_ff_act = linear_backward(&t.ff_act, &d_ff_out, &layer.ff_contract, &mut g.ff_contract);
        let d_ff_pre = &d_ff_act * &t.ff_pre.mapv(gelu_prime);
        d_y += &linear_backward(&t.ln_attn.output, &d_ff_pre, &layer.ff_expand, &mut g.ff_expand);

        // y = LN1(x + dropout(Wo context)).
        let d_res_attn = layer_norm_backward(&d_y, &t.ln_attn, &layer.ln_attn, &mut g.ln_attn);
        let d_attn_out = masked(&d_res_attn, &t.attn_dropout);
        let mut d_input = d_res_attn;

        let d_context = linear_backward(&t.context, &d_attn_out, &layer.output, &mut g.output);

        // Attention core, per sample and head.
        let mut d_q = Array3::zeros((b_sz, l, h));
        let mut d_k = Array3::zeros((b_sz, l, h));
        let mut d_v = Array3::zeros((b_sz, l, h));
        for bi in 0..b_sz {
            for head in 0..n_heads {
                let cols = head * d_head..(head + 1) * d_head;
                let probs = t.attn_probs.slice(s![bi, head, .., ..]);
                let d_ctx_bh = d_context.slice(s![bi, .., cols.clone()]);
                let q_bh = t.q.slice(s![bi, .., cols.clone()]);
                let k_bh = t.k.slice(s![bi, .., cols.clone()]);
                let v_bh = t.v.slice(s![bi, .., cols.clone()]);

                let d_probs = d_ctx_bh.dot(&v_bh.t());
                let d_v_bh = probs.t().dot(&d_ctx_bh);

                // Softmax backward: rows with zeroed (PAD) weights get zero
                // score gradients automatically.
                let mut d_scores = Array2::zeros((l, l));
                for r in 0..l {
                    let mut row_dot = 0.0;
                    for c in 0..l {
                        row_dot += probs[(r, c)] * d_probs[(r, c)];
                    }
                    for c in 0..l {
                        d_scores[(r, c)] = probs[(r, c)] * (d_probs[(r, c)] - row_dot) * scale;
                    }
                }

                let d_q_bh = d_scores.dot(&k_bh);
                let d_k_bh = d_scores.t().dot(&q_bh);

                d_q.slice_mut(s![bi, .., cols.clone()]).assign(&d_q_bh);
                d_k.slice_mut(s![bi, .., cols.clone()]).assign(&d_k_bh);
                d_v.slice_mut(s![bi, .., cols]).assign(&d_v_bh);
            }
        }

        d_input += &linear_backward(layer_input, &d_q, &layer.query, &mut g.query);
        d_input += &linear_backward(layer_input, &d_k, &layer.key, &mut g.key);
        d_input += &linear_backward(layer_input, &d_v, &layer.value, &mut g.value);
        d_x = d_input;
    }

    // Embedding lookups: scatter into the token rows and position rows.
    let d_embedded = masked(&d_x, &trace.embed_dropout);
    for (bi, ids) in batch.ids.iter().enumerate() {
        for (li, &id) in ids.iter().enumerate() {
            let g_row = d_embedded.slice(s![bi, li, ..]);
            grads
                .token_embedding
                .row_mut(id as usize)
                .zip_mut_with(&g_row, |a, b| *a += b);
            grads
                .position_embedding
                .row_mut(li)
                .zip_mut_with(&g_row, |a, b| *a += b);
        }
    }

    Ok((loss, grads))
}

/// Mean cross-entropy of a batch with dropout off.
pub fn evaluate_loss(params: &ModelParams, batch: &EncodedBatch) -> Result<f64, ModelError> {
    let trace = forward(params, batch, false, 0)?;
    let (loss, _) = cross_entropy(&trace.logits, &batch.labels, params.config.n_classes)?;
    Ok(loss)
}

/// Argmax over logits per row; ties resolve to the lowest class index.
pub fn predict(params: &ModelParams, batch: &EncodedBatch) -> Result<Vec<usize>, ModelError> {
    let trace = forward(params, batch, false, 0)?;
    Ok(trace
        .logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}
