//! Model parameters, initialization, and the forward/backward passes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::{ArchitectureDescriptor, LayerSpec};
use crate::tensor::{
    avg_pool, avg_pool_backward, conv2d_backward, conv2d_valid_fast, Tensor,
};

/// Trainable tensors of one layer. Gradients reuse the same enum so a
/// parameter set and its gradient always line up variant by variant.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// `kernels` is [maps, in_channels, kh, kw]; `bias` is [maps].
    Conv { kernels: Tensor, bias: Tensor },
    /// Per-map gain and bias applied after the window average; both [maps].
    Subsample { gain: Tensor, bias: Tensor },
    /// `weight` is [units, fan_in]; `bias` is [units].
    Full { weight: Tensor, bias: Tensor },
    /// The layer has nothing trainable (activations, plain subsampling).
    None,
}

impl LayerParams {
    /// Tensor views with stable names, for digests, serializers, and
    /// gradient checkers.
    pub fn named_tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            LayerParams::Conv { kernels, bias } => vec![("kernels", kernels), ("bias", bias)],
            LayerParams::Subsample { gain, bias } => vec![("gain", gain), ("bias", bias)],
            LayerParams::Full { weight, bias } => vec![("weight", weight), ("bias", bias)],
            LayerParams::None => Vec::new(),
        }
    }

    pub(crate) fn variant_tag(&self) -> u8 {
        match self {
            LayerParams::None => 0,
            LayerParams::Conv { .. } => 1,
            LayerParams::Subsample { .. } => 2,
            LayerParams::Full { .. } => 3,
        }
    }
}

/// A network with its parameters and the bookkeeping needed to reproduce
/// and reuse it: normalization statistics of the data it was trained on,
/// the seed it was initialized from, and the number of completed epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub arch: ArchitectureDescriptor,
    pub params: Vec<LayerParams>,
    pub norm_stats: NormStats,
    pub seed: u64,
    pub epoch: u32,
}

/// Everything backward needs from one forward pass: each layer's input and,
/// for trainable subsampling, the plain window average before gain and bias.
pub struct Tape {
    pub(crate) entries: Vec<TapeEntry>,
    pub output: Tensor,
}

pub(crate) struct TapeEntry {
    pub(crate) input: Tensor,
    pub(crate) pooled: Option<Tensor>,
}

impl ModelState {
    /// Initializes a model from an architecture and a seed.
    ///
    /// Conv and fully-connected weights are drawn uniformly from
    /// [-2.4/√fan_in, +2.4/√fan_in] where fan_in is the number of inputs
    /// feeding one output unit, so each unit's pre-activation variance is
    /// independent of how many inputs it sums; all biases start at zero and
    /// subsample gains at one. Draw order is fixed: layers in order, each
    /// weight tensor in row-major order, from a ChaCha8 stream seeded with
    /// `seed`, so a seed always produces a bit-identical model.
    ///
    /// The architecture must validate and end in a ten-unit dense layer.
    pub fn init(arch: ArchitectureDescriptor, seed: u64) -> Result<ModelState> {
        let trace = arch.validate()?;
        match arch.layers.last() {
            Some(LayerSpec::Full { units: 10 }) => {}
            other => {
                return Err(Error::InvalidArchitecture(format!(
                    "final layer must be a ten-unit dense layer, got {other:?}"
                )))
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.layers.len());
        for (index, layer) in arch.layers.iter().enumerate() {
            let input_shape = &trace[index];
            params.push(init_layer(*layer, input_shape, &mut rng));
        }
        Ok(ModelState {
            arch,
            params,
            norm_stats: NormStats::IDENTITY,
            seed,
            epoch: 0,
        })
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(layer_param_count).sum()
    }

    /// Zero tensors shaped like every trainable parameter, used as gradient
    /// accumulators and momentum velocity.
    pub fn zero_grads(&self) -> Vec<LayerParams> {
        self.params
            .iter()
            .map(|p| match p {
                LayerParams::Conv { kernels, bias } => LayerParams::Conv {
                    kernels: Tensor::zeros(kernels.shape()),
                    bias: Tensor::zeros(bias.shape()),
                },
                LayerParams::Subsample { gain, bias } => LayerParams::Subsample {
                    gain: Tensor::zeros(gain.shape()),
                    bias: Tensor::zeros(bias.shape()),
                },
                LayerParams::Full { weight, bias } => LayerParams::Full {
                    weight: Tensor::zeros(weight.shape()),
                    bias: Tensor::zeros(bias.shape()),
                },
                LayerParams::None => LayerParams::None,
            })
            .collect()
    }

    /// SHA-256 over every parameter tensor (layer order, shapes and
    /// little-endian float bytes), as lowercase hex. Bit-identical models
    /// and only bit-identical models share a digest.
    pub fn param_digest(&self) -> String {
        let mut hasher = Sha256::new();
        for param in &self.params {
            hasher.update([param.variant_tag()]);
            for (_, tensor) in param.named_tensors() {
                crate::hash::update_tensor(&mut hasher, tensor);
            }
        }
        crate::hash::finish_hex(hasher)
    }

    /// Runs the network on one input, recording what backward will need.
    pub fn forward(&self, input: &Tensor) -> Result<Tape> {
        if input.shape() != self.arch.input_shape {
            return Err(Error::ShapeMismatch {
                context: "network input",
                expected: format!("{:?}", self.arch.input_shape),
                actual: format!("{:?}", input.shape()),
            });
        }
        if self.params.len() != self.arch.layers.len() {
            return Err(Error::TapeMismatch(format!(
                "model has {} parameter slots for {} layers",
                self.params.len(),
                self.arch.layers.len()
            )));
        }
        let mut entries = Vec::with_capacity(self.arch.layers.len());
        let mut current = input.clone();
        for (layer, param) in self.arch.layers.iter().zip(&self.params) {
            let (next, pooled) = forward_layer(*layer, param, &current)?;
            entries.push(TapeEntry {
                input: current,
                pooled,
            });
            current = next;
        }
        Ok(Tape {
            entries,
            output: current,
        })
    }

    /// Backpropagates `loss_grad` (the gradient of a scalar loss with
    /// respect to the network output) through the tape, producing one
    /// gradient entry per layer, aligned with `params`.
    pub fn backward(&self, tape: &Tape, loss_grad: &Tensor) -> Result<Vec<LayerParams>> {
        if tape.entries.len() != self.arch.layers.len() {
            return Err(Error::TapeMismatch(format!(
                "tape has {} entries for {} layers",
                tape.entries.len(),
                self.arch.layers.len()
            )));
        }
        if loss_grad.shape() != tape.output.shape() {
            return Err(Error::ShapeMismatch {
                context: "loss gradient",
                expected: format!("{:?}", tape.output.shape()),
                actual: format!("{:?}", loss_grad.shape()),
            });
        }
        let mut grads = vec![LayerParams::None; self.arch.layers.len()];
        let mut grad = loss_grad.clone();
        for index in (0..self.arch.layers.len()).rev() {
            let entry = &tape.entries[index];
            let layer_output = if index + 1 < self.arch.layers.len() {
                &tape.entries[index + 1].input
            } else {
                &tape.output
            };
            let (grad_in, layer_grads) = backward_layer(
                self.arch.layers[index],
                &self.params[index],
                entry,
                layer_output,
                &grad,
            )?;
            grads[index] = layer_grads;
            grad = grad_in;
        }
        Ok(grads)
    }
}

fn layer_param_count(param: &LayerParams) -> usize {
    match param {
        LayerParams::Conv { kernels, bias } => kernels.len() + bias.len(),
        LayerParams::Subsample { gain, bias } => gain.len() + bias.len(),
        LayerParams::Full { weight, bias } => weight.len() + bias.len(),
        LayerParams::None => 0,
    }
}

fn init_layer(layer: LayerSpec, input_shape: &[usize], rng: &mut ChaCha8Rng) -> LayerParams {
    match layer {
        LayerSpec::Conv { maps, kh, kw } => {
            let cin = input_shape[0];
            let fan_in = cin * kh * kw;
            let kernels = draw_uniform(&[maps, cin, kh, kw], fan_in, rng);
            LayerParams::Conv {
                kernels,
                bias: Tensor::zeros(&[maps]),
            }
        }
        LayerSpec::Subsample {
            trainable: true, ..
        } => {
            let maps = input_shape[0];
            LayerParams::Subsample {
                gain: Tensor::filled(&[maps], 1.0),
                bias: Tensor::zeros(&[maps]),
            }
        }
        LayerSpec::Full { units } => {
            let fan_in: usize = input_shape.iter().product();
            let weight = draw_uniform(&[units, fan_in], fan_in, rng);
            LayerParams::Full {
                weight,
                bias: Tensor::zeros(&[units]),
            }
        }
        LayerSpec::Act(_)
        | LayerSpec::Subsample {
            trainable: false, ..
        } => LayerParams::None,
    }
}

fn draw_uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = 2.4 / libm::sqrt(fan_in as f64);
    let dist = Uniform::new_inclusive(-bound, bound);
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(shape, data).expect("shape/list agree by construction")
}

fn forward_layer(
    layer: LayerSpec,
    param: &LayerParams,
    input: &Tensor,
) -> Result<(Tensor, Option<Tensor>)> {
    match (layer, param) {
        (LayerSpec::Conv { .. }, LayerParams::Conv { kernels, bias }) => {
            Ok((conv2d_valid_fast(input, kernels, bias)?, None))
        }
        (LayerSpec::Act(kind), LayerParams::None) => {
            let data: Vec<f64> = input.data().iter().map(|&x| kind.apply(x)).collect();
            Ok((
                Tensor::from_vec(input.shape(), data).expect("same length"),
                None,
            ))
        }
        (
            LayerSpec::Subsample {
                ph,
                pw,
                trainable: true,
            },
            LayerParams::Subsample { gain, bias },
        ) => {
            let pooled = avg_pool(input, ph, pw)?;
            let maps = pooled.shape()[0];
            if gain.len() != maps || bias.len() != maps {
                return Err(Error::ShapeMismatch {
                    context: "subsample gain/bias",
                    expected: format!("[{maps}]"),
                    actual: format!("{:?}/{:?}", gain.shape(), bias.shape()),
                });
            }
            let per_map = pooled.len() / maps;
            let mut data = Vec::with_capacity(pooled.len());
            for (c, chunk) in pooled.data().chunks_exact(per_map).enumerate() {
                let (g, b) = (gain.data()[c], bias.data()[c]);
                data.extend(chunk.iter().map(|&v| g * v + b));
            }
            let out = Tensor::from_vec(pooled.shape(), data).expect("same length");
            Ok((out, Some(pooled)))
        }
        (
            LayerSpec::Subsample {
                ph,
                pw,
                trainable: false,
            },
            LayerParams::None,
        ) => Ok((avg_pool(input, ph, pw)?, None)),
        (LayerSpec::Full { .. }, LayerParams::Full { weight, bias }) => {
            let units = weight.shape()[0];
            let fan_in = weight.shape()[1];
            if input.len() != fan_in {
                return Err(Error::ShapeMismatch {
                    context: "dense layer input",
                    expected: format!("{fan_in} values"),
                    actual: format!("{} values", input.len()),
                });
            }
            let x = input.data();
            let mut out = Vec::with_capacity(units);
            for u in 0..units {
                let row = &weight.data()[u * fan_in..(u + 1) * fan_in];
                let mut acc = bias.data()[u];
                for (w, v) in row.iter().zip(x) {
                    acc += w * v;
                }
                out.push(acc);
            }
            Ok((Tensor::from_vec(&[units], out).expect("same length"), None))
        }
        (layer, _) => Err(Error::TapeMismatch(format!(
            "parameters do not match layer {layer:?}"
        ))),
    }
}

fn backward_layer(
    layer: LayerSpec,
    param: &LayerParams,
    entry: &TapeEntry,
    layer_output: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, LayerParams)> {
    match (layer, param) {
        (LayerSpec::Conv { .. }, LayerParams::Conv { kernels, .. }) => {
            let (grad_in, grad_kernels, grad_bias) =
                conv2d_backward(&entry.input, kernels, grad_out)?;
            Ok((
                grad_in,
                LayerParams::Conv {
                    kernels: grad_kernels,
                    bias: grad_bias,
                },
            ))
        }
        (LayerSpec::Act(kind), LayerParams::None) => {
            let x = entry.input.data();
            let y = layer_output.data();
            let data: Vec<f64> = grad_out
                .data()
                .iter()
                .zip(x.iter().zip(y))
                .map(|(&g, (&x, &y))| g * kind.derivative_from_io(x, y))
                .collect();
            Ok((
                Tensor::from_vec(entry.input.shape(), data).expect("same length"),
                LayerParams::None,
            ))
        }
        (
            LayerSpec::Subsample {
                ph,
                pw,
                trainable: true,
            },
            LayerParams::Subsample { gain, .. },
        ) => {
            let pooled = entry.pooled.as_ref().ok_or_else(|| {
                Error::TapeMismatch(String::from(
                    "trainable subsample entry is missing its pooled tensor",
                ))
            })?;
            let maps = pooled.shape()[0];
            let per_map = pooled.len() / maps;
            let mut grad_gain = vec![0.0; maps];
            let mut grad_bias = vec![0.0; maps];
            let mut inner = Vec::with_capacity(pooled.len());
            for c in 0..maps {
                let g = gain.data()[c];
                let go = &grad_out.data()[c * per_map..(c + 1) * per_map];
                let pv = &pooled.data()[c * per_map..(c + 1) * per_map];
                for (&go_v, &p_v) in go.iter().zip(pv) {
                    grad_gain[c] += go_v * p_v;
                    grad_bias[c] += go_v;
                    inner.push(go_v * g);
                }
            }
            let inner = Tensor::from_vec(pooled.shape(), inner).expect("same length");
            let grad_in = avg_pool_backward(&inner, entry.input.shape(), ph, pw)?;
            Ok((
                grad_in,
                LayerParams::Subsample {
                    gain: Tensor::from_vec(&[maps], grad_gain).expect("same length"),
                    bias: Tensor::from_vec(&[maps], grad_bias).expect("same length"),
                },
            ))
        }
        (
            LayerSpec::Subsample {
                ph,
                pw,
                trainable: false,
            },
            LayerParams::None,
        ) => Ok((
            avg_pool_backward(grad_out, entry.input.shape(), ph, pw)?,
            LayerParams::None,
        )),
        (LayerSpec::Full { .. }, LayerParams::Full { weight, .. }) => {
            let units = weight.shape()[0];
            let fan_in = weight.shape()[1];
            let x = entry.input.data();
            let g = grad_out.data();
            let mut grad_weight = vec![0.0; units * fan_in];
            let mut grad_in = vec![0.0; fan_in];
            for u in 0..units {
                let gu = g[u];
                let row = &weight.data()[u * fan_in..(u + 1) * fan_in];
                let grow = &mut grad_weight[u * fan_in..(u + 1) * fan_in];
                for k in 0..fan_in {
                    grow[k] = gu * x[k];
                    grad_in[k] += gu * row[k];
                }
            }
            Ok((
                Tensor::from_vec(entry.input.shape(), grad_in).expect("same length"),
                LayerParams::Full {
                    weight: Tensor::from_vec(&[units, fan_in], grad_weight)
                        .expect("same length"),
                    bias: Tensor::from_vec(&[units], g.to_vec()).expect("same length"),
                },
            ))
        }
        (layer, _) => Err(Error::TapeMismatch(format!(
            "parameters do not match layer {layer:?}"
        ))),
    }
}

/// Mean squared error against a ±1 one-hot target: the target has +1 at
/// `label` and −1 elsewhere; loss = (1/n)·Σ(output−t)² and the returned
/// gradient is (2/n)(output−t).
pub fn loss_mse(output: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    if output.rank() != 1 {
        return Err(Error::InvalidDimension("loss expects a rank-1 output"));
    }
    let n = output.len();
    if label >= n {
        return Err(Error::LabelOutOfRange { value: label });
    }
    let scale = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (i, &y) in output.data().iter().enumerate() {
        let t = if i == label { 1.0 } else { -1.0 };
        let d = y - t;
        loss += d * d * scale;
        grad.push(2.0 * scale * d);
    }
    Ok((loss, Tensor::from_vec(&[n], grad).expect("same length")))
}

/// Argmax class of a score vector; ties go to the lowest index.
pub fn predict(output: &Tensor) -> usize {
    output.argmax()
}
