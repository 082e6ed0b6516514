//! Learnable weights and the flat parameter enumeration used by the
//! optimizer, the checkpoint format, and gradient checks.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, ModelError};

/// Standard deviation of the seeded normal initializer.
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    /// in x out.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub query: LinearParams,
    pub key: LinearParams,
    pub value: LinearParams,
    pub output: LinearParams,
    pub ln_attn: LayerNormParams,
    pub ff_expand: LinearParams,
    pub ff_contract: LinearParams,
    pub ln_ff: LayerNormParams,
}

/// All learnable weights of the classifier, together with the config that
/// fixes their shapes. The same container holds gradients, which mirror the
/// parameters exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// vocab_size x hidden.
    pub token_embedding: Array2<f64>,
    /// max_len x hidden.
    pub position_embedding: Array2<f64>,
    pub layers: Vec<EncoderLayerParams>,
    /// hidden x n_classes plus bias.
    pub classifier: LinearParams,
}

/// Read-only view of one weight tensor in enumeration order.
pub struct ParamView<'a> {
    pub name: String,
    pub values: &'a [f64],
    /// Whether weight decay applies; biases and layer-norm parameters are
    /// exempt.
    pub decay: bool,
}

/// Mutable counterpart of [`ParamView`].
pub struct ParamViewMut<'a> {
    pub name: String,
    pub values: &'a mut [f64],
    pub decay: bool,
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("contiguous array")
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous array")
}

impl ModelParams {
    /// Seeded initialization: weights and embeddings from N(0, 0.02^2),
    /// layer-norm scales 1, biases and shifts 0. Deterministic given
    /// `(config, seed)`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut draw2 = |rows: usize, cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || normal.sample(&mut rng))
        };

        let h = config.hidden;
        let f = config.ff_dim;
        let token_embedding = draw2(config.vocab_size, h);
        let position_embedding = draw2(config.max_len, h);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(EncoderLayerParams {
                query: LinearParams {
                    weight: draw2(h, h),
                    bias: Array1::zeros(h),
                },
                key: LinearParams {
                    weight: draw2(h, h),
                    bias: Array1::zeros(h),
                },
                value: LinearParams {
                    weight: draw2(h, h),
                    bias: Array1::zeros(h),
                },
                output: LinearParams {
                    weight: draw2(h, h),
                    bias: Array1::zeros(h),
                },
                ln_attn: LayerNormParams {
                    gamma: Array1::ones(h),
                    beta: Array1::zeros(h),
                },
                ff_expand: LinearParams {
                    weight: draw2(h, f),
                    bias: Array1::zeros(f),
                },
                ff_contract: LinearParams {
                    weight: draw2(f, h),
                    bias: Array1::zeros(h),
                },
                ln_ff: LayerNormParams {
                    gamma: Array1::ones(h),
                    beta: Array1::zeros(h),
                },
            });
        }
        let classifier = LinearParams {
            weight: draw2(h, config.n_classes),
            bias: Array1::zeros(config.n_classes),
        };
        Ok(Self {
            config: *config,
            token_embedding,
            position_embedding,
            layers,
            classifier,
        })
    }

    /// A gradient container: every tensor zero, shapes from `config`.
    pub fn zeros_like(config: &ModelConfig) -> Self {
        let h = config.hidden;
        let f = config.ff_dim;
        let linear = |rows, cols| LinearParams {
            weight: Array2::zeros((rows, cols)),
            bias: Array1::zeros(cols),
        };
        let layer_norm = || LayerNormParams {
            gamma: Array1::zeros(h),
            beta: Array1::zeros(h),
        };
        Self {
            config: *config,
            token_embedding: Array2::zeros((config.vocab_size, h)),
            position_embedding: Array2::zeros((config.max_len, h)),
            layers: (0..config.n_layers)
                .map(|_| EncoderLayerParams {
                    query: linear(h, h),
                    key: linear(h, h),
                    value: linear(h, h),
                    output: linear(h, h),
                    ln_attn: layer_norm(),
                    ff_expand: linear(h, f),
                    ff_contract: linear(f, h),
                    ln_ff: layer_norm(),
                })
                .collect(),
            classifier: linear(h, config.n_classes),
        }
    }

    /// Tensors in declared order: embeddings, then per-layer attention,
    /// layer norms and feed-forward, then the classifier head. This order is
    /// the checkpoint layout and the optimizer-state layout.
    pub fn views(&self) -> Vec<ParamView<'_>> {
        let mut out = Vec::with_capacity(2 + self.layers.len() * 16 + 2);
        out.push(ParamView {
            name: "token_embedding".to_owned(),
            values: slice2(&self.token_embedding),
            decay: true,
        });
        out.push(ParamView {
            name: "position_embedding".to_owned(),
            values: slice2(&self.position_embedding),
            decay: true,
        });
        for (i, layer) in self.layers.iter().enumerate() {
            let entries: [(&str, &[f64], bool); 16] = [
                ("query.weight", slice2(&layer.query.weight), true),
                ("query.bias", slice1(&layer.query.bias), false),
                ("key.weight", slice2(&layer.key.weight), true),
                ("key.bias", slice1(&layer.key.bias), false),
                ("value.weight", slice2(&layer.value.weight), true),
                ("value.bias", slice1(&layer.value.bias), false),
                ("output.weight", slice2(&layer.output.weight), true),
                ("output.bias", slice1(&layer.output.bias), false),
                ("ln_attn.gamma", slice1(&layer.ln_attn.gamma), false),
                ("ln_attn.beta", slice1(&layer.ln_attn.beta), false),
                ("ff_expand.weight", slice2(&layer.ff_expand.weight), true),
                ("ff_expand.bias", slice1(&layer.ff_expand.bias), false),
                ("ff_contract.weight", slice2(&layer.ff_contract.weight), true),
                ("ff_contract.bias", slice1(&layer.ff_contract.bias), false),
                ("ln_ff.gamma", slice1(&layer.ln_ff.gamma), false),
                ("ln_ff.beta", slice1(&layer.ln_ff.beta), false),
            ];
            for (suffix, values, decay) in entries {
                out.push(ParamView {
                    name: format!("layer{i}.{suffix}"),
                    values,
                    decay,
                });
            }
        }
        out.push(ParamView {
            name: "classifier.weight".to_owned(),
            values: slice2(&self.classifier.weight),
            decay: true,
        });
        out.push(ParamView {
            name: "classifier.bias".to_owned(),
            values: slice1(&self.classifier.bias),
            decay: false,
        });
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::views`].
    pub fn views_mut(&mut self) -> Vec<ParamViewMut<'_>> {
        let mut out = Vec::with_capacity(2 + self.layers.len() * 16 + 2);
        out.push(ParamViewMut {
            name: "token_embedding".to_owned(),
            values: self.token_embedding.as_slice_mut().expect("contiguous"),
            decay: true,
        });
        out.push(ParamViewMut {
            name: "position_embedding".to_owned(),
            values: self.position_embedding.as_slice_mut().expect("contiguous"),
            decay: true,
        });
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let entries: [(&str, &mut [f64], bool); 16] = [
                (
                    "query.weight",
                    layer.query.weight.as_slice_mut().expect("contiguous"),
                    true,
                ),
                (
                    "query.bias",
                    layer.query.bias.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "key.weight",
                    layer.key.weight.as_slice_mut().expect("contiguous"),
                    true,
                ),
                (
                    "key.bias",
                    layer.key.bias.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "value.weight",
                    layer.value.weight.as_slice_mut().expect("contiguous"),
                    true,
                ),
                (
                    "value.bias",
                    layer.value.bias.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "output.weight",
                    layer.output.weight.as_slice_mut().expect("contiguous"),
                    true,
                ),
                (
                    "output.bias",
                    layer.output.bias.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "ln_attn.gamma",
                    layer.ln_attn.gamma.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "ln_attn.beta",
                    layer.ln_attn.beta.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "ff_expand.weight",
                    layer.ff_expand.weight.as_slice_mut().expect("contiguous"),
                    true,
                ),
                (
                    "ff_expand.bias",
                    layer.ff_expand.bias.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "ff_contract.weight",
                    layer.ff_contract.weight.as_slice_mut().expect("contiguous"),
                    true,
                ),
                (
                    "ff_contract.bias",
                    layer.ff_contract.bias.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "ln_ff.gamma",
                    layer.ln_ff.gamma.as_slice_mut().expect("contiguous"),
                    false,
                ),
                (
                    "ln_ff.beta",
                    layer.ln_ff.beta.as_slice_mut().expect("contiguous"),
                    false,
                ),
            ];
            for (suffix, values, decay) in entries {
                out.push(ParamViewMut {
                    name: format!("layer{i}.{suffix}"),
                    values,
                    decay,
                });
            }
        }
        out.push(ParamViewMut {
            name: "classifier.weight".to_owned(),
            values: self.classifier.weight.as_slice_mut().expect("contiguous"),
            decay: true,
        });
        out.push(ParamViewMut {
            name: "classifier.bias".to_owned(),
            values: self.classifier.bias.as_slice_mut().expect("contiguous"),
            decay: false,
        });
        out
    }

    pub fn param_count(&self) -> usize {
        self.views().iter().map(|v| v.values.len()).sum()
    }

    /// Reads the scalar at a flat index over the enumeration order.
    pub fn get_flat(&self, index: usize) -> Option<f64> {
        let mut offset = 0;
        for view in self.views() {
            if index < offset + view.values.len() {
                return Some(view.values[index - offset]);
            }
            offset += view.values.len();
        }
        None
    }

    /// Writes the scalar at a flat index over the enumeration order.
    pub fn set_flat(&mut self, index: usize, value: f64) -> bool {
        let mut offset = 0;
        for view in self.views_mut() {
            if index < offset + view.values.len() {
                view.values[index - offset] = value;
                return true;
            }
            offset += view.values.len();
        }
        false
    }
}
