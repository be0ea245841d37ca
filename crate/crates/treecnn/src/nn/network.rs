use rand::Rng;
use sha2::{Digest, Sha256};

use super::layers::{self, BatchNormCache};
use super::{DataShape, LayerSpec, NetworkSpec, Padding};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Trainable state of one layer.
#[derive(Debug, Clone)]
pub(crate) enum LayerParams {
    Conv {
        kernel: Tensor,
        bias: Tensor,
    },
    FullyConnected {
        weight: Tensor,
        bias: Tensor,
    },
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
    },
    None,
}

impl LayerParams {
    /// Tensors in checkpoint order.
    pub(crate) fn tensors(&self) -> Vec<&Tensor> {
        match self {
            LayerParams::Conv { kernel, bias } => vec![kernel, bias],
            LayerParams::FullyConnected { weight, bias } => vec![weight, bias],
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => vec![gamma, beta, running_mean, running_var],
            LayerParams::None => vec![],
        }
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerParams::Conv { kernel, bias } => vec![kernel, bias],
            LayerParams::FullyConnected { weight, bias } => vec![weight, bias],
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => vec![gamma, beta, running_mean, running_var],
            LayerParams::None => vec![],
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum LayerGrads {
    Conv { kernel: Tensor, bias: Tensor },
    FullyConnected { weight: Tensor, bias: Tensor },
    BatchNorm { gamma: Tensor, beta: Tensor },
    None,
}

/// Per-layer weight gradients produced by [`Network::loss_and_gradients`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) layers: Vec<LayerGrads>,
}

enum TraceAux {
    None,
    MaxPool(Vec<u32>),
    Dropout(Vec<f32>),
    BatchNorm(BatchNormCache),
}

struct Trace {
    /// `activations[i]` is the input to layer `i`; the last entry is the
    /// score output.
    activations: Vec<Tensor>,
    aux: Vec<TraceAux>,
}

/// A trained (or trainable) instance of a [`NetworkSpec`].
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<DataShape>,
    pub(crate) params: Vec<LayerParams>,
    trainable: Vec<bool>,
    mode: Mode,
}

impl Network {
    /// Instantiate with fan-in-scaled uniform weights drawn from `rng`.
    /// The draw order (layer order, elements row-major) is fixed so a seed
    /// fully determines the initial weights.
    pub fn new(spec: NetworkSpec, rng: &mut impl Rng) -> Result<Self> {
        let shapes = spec.shape_chain()?;
        let mut params = Vec::with_capacity(spec.layers.len());
        for (i, layer) in spec.layers.iter().enumerate() {
            params.push(match *layer {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    let mut k = Tensor::zeros(&[out_channels, in_channels, kernel, kernel]);
                    fill_fan_in(k.data_mut(), in_channels * kernel * kernel, rng);
                    LayerParams::Conv {
                        kernel: k,
                        bias: Tensor::zeros(&[out_channels]),
                    }
                }
                LayerSpec::FullyConnected {
                    in_features,
                    out_features,
                    ..
                } => {
                    let mut w = Tensor::zeros(&[out_features, in_features]);
                    fill_fan_in(w.data_mut(), in_features, rng);
                    LayerParams::FullyConnected {
                        weight: w,
                        bias: Tensor::zeros(&[out_features]),
                    }
                }
                LayerSpec::BatchNorm => {
                    let features = batchnorm_features(shapes[i]);
                    LayerParams::BatchNorm {
                        gamma: Tensor::filled(&[features], 1.0),
                        beta: Tensor::zeros(&[features]),
                        running_mean: Tensor::zeros(&[features]),
                        running_var: Tensor::filled(&[features], 1.0),
                    }
                }
                _ => LayerParams::None,
            });
        }
        let trainable = vec![true; spec.layers.len()];
        Ok(Network {
            spec,
            shapes,
            params,
            trainable,
            mode: Mode::Eval,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn class_count(&self) -> usize {
        self.spec.class_count()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Restrict training to the named layer blocks (for fine-tuning depths).
    /// Layers without a block tag (pooling, batch-norm, activations) follow
    /// the nearest preceding tagged layer. `None` makes everything trainable.
    pub fn set_trainable_blocks(&mut self, subset: Option<&[String]>) -> Result<()> {
        match subset {
            None => self.trainable.iter_mut().for_each(|t| *t = true),
            Some(blocks) => {
                let known = self.spec.blocks();
                for block in blocks {
                    if !known.iter().any(|b| b == block) {
                        return Err(Error::UnknownLayerBlock(block.clone()));
                    }
                }
                let mut current: Option<&str> = None;
                for (i, layer) in self.spec.layers.iter().enumerate() {
                    if let Some(block) = layer.block() {
                        current = Some(block);
                    }
                    self.trainable[i] =
                        current.is_some_and(|c| blocks.iter().any(|b| b == c));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn is_layer_trainable(&self, index: usize) -> bool {
        self.trainable[index]
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let expected = self.spec.input.extents();
        let shape = batch.shape();
        if shape.len() != expected.len() + 1 || shape[1..] != expected[..] || shape[0] == 0 {
            return Err(Error::ShapeMismatch {
                layer: "input".into(),
                expected: format!("[batch, {expected:?}]"),
                got: format!("{shape:?}"),
            });
        }
        Ok(shape[0])
    }

    fn layer_count_without_softmax(&self) -> usize {
        let n = self.spec.layers.len();
        if matches!(self.spec.layers.last(), Some(LayerSpec::Softmax)) {
            n - 1
        } else {
            n
        }
    }

    /// Deterministic inference pass yielding class scores `[batch, N]`.
    ///
    /// Runs with eval semantics regardless of mode: dropout is identity and
    /// batch-norm uses running statistics. A trailing softmax layer is not
    /// applied (scores order is softmax-invariant); see [`Network::forward_probs`].
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.check_batch(batch)?;
        let mut current = batch.clone();
        for i in 0..self.layer_count_without_softmax() {
            current = self.forward_layer_eval(i, &current, n)?;
        }
        if !current.is_finite() {
            return Err(Error::NonFinite("forward pass".into()));
        }
        Ok(current)
    }

    /// Class probabilities: forward scores pushed through a softmax.
    pub fn forward_probs(&self, batch: &Tensor) -> Result<Tensor> {
        let scores = self.forward(batch)?;
        let n = scores.shape()[0];
        let classes = scores.shape()[1];
        let mut out = Tensor::zeros(scores.shape());
        layers::softmax_rows(scores.data(), out.data_mut(), n, classes);
        Ok(out)
    }

    fn forward_layer_eval(&self, i: usize, input: &Tensor, n: usize) -> Result<Tensor> {
        let out_shape = batched(self.shapes[i + 1], n);
        let mut output = Tensor::zeros(&out_shape);
        match (&self.spec.layers[i], &self.params[i]) {
            (
                &LayerSpec::Conv {
                    kernel: k,
                    stride,
                    padding,
                    in_channels,
                    out_channels,
                    ..
                },
                LayerParams::Conv { kernel, bias },
            ) => {
                let (h, w) = image_hw(self.shapes[i]);
                let (ho, wo) = image_hw(self.shapes[i + 1]);
                let pad = pad_of(padding, k);
                layers::conv_forward(
                    input.data(),
                    output.data_mut(),
                    kernel.data(),
                    bias.data(),
                    n,
                    (in_channels, h, w),
                    (out_channels, k, stride, pad),
                    (ho, wo),
                );
            }
            (&LayerSpec::MaxPool { window }, _) => {
                let (c, h, w) = image_chw(self.shapes[i]);
                let (ho, wo) = image_hw(self.shapes[i + 1]);
                let mut argmax = vec![0u32; output.len()];
                layers::maxpool_forward(
                    input.data(),
                    output.data_mut(),
                    &mut argmax,
                    n,
                    (c, h, w),
                    window,
                    (ho, wo),
                );
            }
            (&LayerSpec::AvgPool { window }, _) => {
                let (c, h, w) = image_chw(self.shapes[i]);
                let (ho, wo) = image_hw(self.shapes[i + 1]);
                layers::avgpool_forward(
                    input.data(),
                    output.data_mut(),
                    n,
                    (c, h, w),
                    window,
                    (ho, wo),
                );
            }
            (
                &LayerSpec::FullyConnected {
                    in_features,
                    out_features,
                    ..
                },
                LayerParams::FullyConnected { weight, bias },
            ) => {
                layers::fc_forward(
                    input.data(),
                    output.data_mut(),
                    weight.data(),
                    bias.data(),
                    n,
                    in_features,
                    out_features,
                );
            }
            (LayerSpec::Relu, _) => layers::relu_forward(input.data(), output.data_mut()),
            // Inverted dropout: identity at inference.
            (LayerSpec::Dropout { .. }, _) => output.data_mut().copy_from_slice(input.data()),
            (
                LayerSpec::BatchNorm,
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                },
            ) => {
                let (features, group) = batchnorm_layout(self.shapes[i]);
                layers::batchnorm_forward_eval(
                    input.data(),
                    output.data_mut(),
                    gamma.data(),
                    beta.data(),
                    running_mean.data(),
                    running_var.data(),
                    n,
                    features,
                    group,
                );
            }
            (LayerSpec::Softmax, _) => unreachable!("softmax handled by caller"),
            _ => unreachable!("params mismatch spec"),
        }
        Ok(output)
    }

    fn forward_train(&mut self, batch: &Tensor, rng: &mut impl Rng) -> Result<Trace> {
        let n = self.check_batch(batch)?;
        let count = self.layer_count_without_softmax();
        let mut activations = Vec::with_capacity(count + 1);
        let mut aux = Vec::with_capacity(count);
        activations.push(batch.clone());
        for i in 0..count {
            let input = activations.last().unwrap();
            let out_shape = batched(self.shapes[i + 1], n);
            let mut output = Tensor::zeros(&out_shape);
            let step_aux = match &self.spec.layers[i] {
                LayerSpec::MaxPool { window } => {
                    let (c, h, w) = image_chw(self.shapes[i]);
                    let (ho, wo) = image_hw(self.shapes[i + 1]);
                    let mut argmax = vec![0u32; output.len()];
                    layers::maxpool_forward(
                        input.data(),
                        output.data_mut(),
                        &mut argmax,
                        n,
                        (c, h, w),
                        *window,
                        (ho, wo),
                    );
                    TraceAux::MaxPool(argmax)
                }
                LayerSpec::Dropout { probability } => {
                    let mut mask = vec![0.0f32; output.len()];
                    layers::dropout_forward(
                        input.data(),
                        output.data_mut(),
                        &mut mask,
                        *probability,
                        rng,
                    );
                    TraceAux::Dropout(mask)
                }
                LayerSpec::BatchNorm => {
                    let (features, group) = batchnorm_layout(self.shapes[i]);
                    if self.trainable[i] {
                        let mut cache = BatchNormCache {
                            mean: vec![0.0; features],
                            inv_std: vec![0.0; features],
                        };
                        let LayerParams::BatchNorm {
                            gamma,
                            beta,
                            running_mean,
                            running_var,
                        } = &mut self.params[i]
                        else {
                            unreachable!("params mismatch spec")
                        };
                        layers::batchnorm_forward_train(
                            input.data(),
                            output.data_mut(),
                            gamma.data(),
                            beta.data(),
                            n,
                            features,
                            group,
                            Some((running_mean.data_mut(), running_var.data_mut())),
                            &mut cache,
                        );
                        TraceAux::BatchNorm(cache)
                    } else {
                        // Frozen batch-norm behaves like eval: running
                        // statistics, and they are not advanced.
                        output = self.forward_layer_eval(i, input, n)?;
                        TraceAux::None
                    }
                }
                _ => {
                    output = self.forward_layer_eval(i, input, n)?;
                    TraceAux::None
                }
            };
            aux.push(step_aux);
            activations.push(output);
        }
        Ok(Trace { activations, aux })
    }

    /// Mean softmax cross-entropy on `batch` plus per-layer weight gradients.
    /// Requires train mode; dropout masks are drawn from `rng`.
    pub fn loss_and_gradients(
        &mut self,
        batch: &Tensor,
        labels: &[usize],
        rng: &mut impl Rng,
    ) -> Result<(f64, Gradients)> {
        if self.mode != Mode::Train {
            return Err(Error::InvalidSpec(
                "loss_and_gradients requires train mode".into(),
            ));
        }
        let classes = self.class_count();
        for &label in labels {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
        }
        let n = self.check_batch(batch)?;
        if labels.len() != n {
            return Err(Error::ShapeMismatch {
                layer: "labels".into(),
                expected: format!("{n}"),
                got: format!("{}", labels.len()),
            });
        }

        let trace = self.forward_train(batch, rng)?;
        let scores = trace.activations.last().unwrap();
        let mut grad_scores = Tensor::zeros(scores.shape());
        let loss = layers::softmax_cross_entropy(
            scores.data(),
            labels,
            grad_scores.data_mut(),
            n,
            classes,
        );
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let grads = self.backward(&trace, grad_scores, n)?;
        Ok((loss, grads))
    }

    fn backward(&self, trace: &Trace, grad_scores: Tensor, n: usize) -> Result<Gradients> {
        let count = self.layer_count_without_softmax();
        let mut grads: Vec<LayerGrads> = self
            .params
            .iter()
            .map(|p| match p {
                LayerParams::Conv { kernel, bias } => LayerGrads::Conv {
                    kernel: Tensor::zeros(kernel.shape()),
                    bias: Tensor::zeros(bias.shape()),
                },
                LayerParams::FullyConnected { weight, bias } => LayerGrads::FullyConnected {
                    weight: Tensor::zeros(weight.shape()),
                    bias: Tensor::zeros(bias.shape()),
                },
                LayerParams::BatchNorm { gamma, beta, .. } => LayerGrads::BatchNorm {
                    gamma: Tensor::zeros(gamma.shape()),
                    beta: Tensor::zeros(beta.shape()),
                },
                LayerParams::None => LayerGrads::None,
            })
            .collect();

        // No gradient is needed below the earliest trainable layer.
        let stop_at = self.trainable[..count]
            .iter()
            .position(|&t| t)
            .unwrap_or(count);

        let mut grad_out = grad_scores;
        for i in (0..count).rev() {
            if i < stop_at {
                break;
            }
            let input = &trace.activations[i];
            let mut grad_in = Tensor::zeros(input.shape());
            match (&self.spec.layers[i], &self.params[i], &mut grads[i]) {
                (
                    &LayerSpec::Conv {
                        kernel: k,
                        stride,
                        padding,
                        in_channels,
                        out_channels,
                        ..
                    },
                    LayerParams::Conv { kernel, .. },
                    LayerGrads::Conv {
                        kernel: g_kernel,
                        bias: g_bias,
                    },
                ) => {
                    let (h, w) = image_hw(self.shapes[i]);
                    let (ho, wo) = image_hw(self.shapes[i + 1]);
                    let pad = pad_of(padding, k);
                    layers::conv_backward(
                        input.data(),
                        grad_out.data(),
                        grad_in.data_mut(),
                        kernel.data(),
                        g_kernel.data_mut(),
                        g_bias.data_mut(),
                        n,
                        (in_channels, h, w),
                        (out_channels, k, stride, pad),
                        (ho, wo),
                    );
                }
                (&LayerSpec::MaxPool { .. }, _, _) => {
                    let TraceAux::MaxPool(argmax) = &trace.aux[i] else {
                        unreachable!("trace mismatch")
                    };
                    layers::maxpool_backward(grad_out.data(), grad_in.data_mut(), argmax);
                }
                (&LayerSpec::AvgPool { window }, _, _) => {
                    let (c, h, w) = image_chw(self.shapes[i]);
                    let (ho, wo) = image_hw(self.shapes[i + 1]);
                    layers::avgpool_backward(
                        grad_out.data(),
                        grad_in.data_mut(),
                        n,
                        (c, h, w),
                        window,
                        (ho, wo),
                    );
                }
                (
                    &LayerSpec::FullyConnected {
                        in_features,
                        out_features,
                        ..
                    },
                    LayerParams::FullyConnected { weight, .. },
                    LayerGrads::FullyConnected {
                        weight: g_weight,
                        bias: g_bias,
                    },
                ) => {
                    layers::fc_backward(
                        input.data(),
                        grad_out.data(),
                        grad_in.data_mut(),
                        weight.data(),
                        g_weight.data_mut(),
                        g_bias.data_mut(),
                        n,
                        in_features,
                        out_features,
                    );
                }
                (LayerSpec::Relu, _, _) => {
                    layers::relu_backward(input.data(), grad_out.data(), grad_in.data_mut());
                }
                (LayerSpec::Dropout { .. }, _, _) => {
                    let TraceAux::Dropout(mask) = &trace.aux[i] else {
                        unreachable!("trace mismatch")
                    };
                    layers::dropout_backward(grad_out.data(), grad_in.data_mut(), mask);
                }
                (
                    LayerSpec::BatchNorm,
                    LayerParams::BatchNorm {
                        gamma,
                        running_var,
                        ..
                    },
                    LayerGrads::BatchNorm {
                        gamma: g_gamma,
                        beta: g_beta,
                    },
                ) => {
                    let (features, group) = batchnorm_layout(self.shapes[i]);
                    match &trace.aux[i] {
                        TraceAux::BatchNorm(cache) => {
                            layers::batchnorm_backward(
                                input.data(),
                                grad_out.data(),
                                grad_in.data_mut(),
                                gamma.data(),
                                g_gamma.data_mut(),
                                g_beta.data_mut(),
                                n,
                                features,
                                group,
                                cache,
                            );
                        }
                        // Frozen batch-norm: running statistics are constants,
                        // so the gradient is a per-feature rescale.
                        _ => {
                            for f in 0..features {
                                let scale = gamma.data()[f]
                                    / ((running_var.data()[f] as f64
                                        + layers::BATCH_NORM_EPSILON)
                                        .sqrt() as f32);
                                for img in 0..n {
                                    let at = (img * features + f) * group;
                                    for off in 0..group {
                                        grad_in.data_mut()[at + off] =
                                            grad_out.data()[at + off] * scale;
                                    }
                                }
                            }
                        }
                    }
                }
                (LayerSpec::Softmax, _, _) => unreachable!("softmax handled by loss"),
                _ => unreachable!("params mismatch spec"),
            }
            grad_out = grad_in;
        }
        Ok(Gradients { layers: grads })
    }

    /// Widen the classifier head by `added` outputs. Existing rows are
    /// preserved; new rows are fan-in initialized when `rng` is given and
    /// zero otherwise (they train up from the softmax gradient either way).
    pub fn widen_output(&mut self, added: usize, mut rng: Option<&mut dyn rand::RngCore>) -> Result<()> {
        if added == 0 {
            return Ok(());
        }
        let index = self
            .spec
            .output_layer_index()
            .ok_or_else(|| Error::InvalidSpec("no fully-connected output layer".into()))?;
        let LayerSpec::FullyConnected {
            in_features,
            out_features,
            ..
        } = &mut self.spec.layers[index]
        else {
            unreachable!()
        };
        let (fan_in, old_out) = (*in_features, *out_features);
        *out_features += added;
        let new_out = *out_features;

        let LayerParams::FullyConnected { weight, bias } = &mut self.params[index] else {
            unreachable!("params mismatch spec")
        };
        let mut data = std::mem::take(weight).into_data();
        data.resize(new_out * fan_in, 0.0);
        if let Some(rng) = rng.as_deref_mut() {
            fill_fan_in(&mut data[old_out * fan_in..], fan_in, rng);
        }
        *weight = Tensor::from_vec(&[new_out, fan_in], data)?;
        let mut bias_data = std::mem::take(bias).into_data();
        bias_data.resize(new_out, 0.0);
        *bias = Tensor::from_vec(&[new_out], bias_data)?;

        self.shapes = self.spec.shape_chain()?;
        Ok(())
    }

    /// Remove one output row from the classifier head (outputs above `index`
    /// shift down by one), mirroring the removal of a child slot.
    pub fn remove_output(&mut self, index: usize) -> Result<()> {
        let layer = self
            .spec
            .output_layer_index()
            .ok_or_else(|| Error::InvalidSpec("no fully-connected output layer".into()))?;
        let LayerSpec::FullyConnected {
            in_features,
            out_features,
            ..
        } = &mut self.spec.layers[layer]
        else {
            unreachable!()
        };
        if index >= *out_features || *out_features == 1 {
            return Err(Error::InvalidSpec(format!(
                "cannot remove output {index} from a {out_features}-way head"
            )));
        }
        let fan_in = *in_features;
        *out_features -= 1;
        let new_out = *out_features;

        let LayerParams::FullyConnected { weight, bias } = &mut self.params[layer] else {
            unreachable!("params mismatch spec")
        };
        let mut data = std::mem::take(weight).into_data();
        data.drain(index * fan_in..(index + 1) * fan_in);
        *weight = Tensor::from_vec(&[new_out, fan_in], data)?;
        let mut bias_data = std::mem::take(bias).into_data();
        bias_data.remove(index);
        *bias = Tensor::from_vec(&[new_out], bias_data)?;

        self.shapes = self.spec.shape_chain()?;
        Ok(())
    }

    /// SHA-256 over all parameter bytes (little-endian, layer order). Used to
    /// detect any mutation of supposedly untouched nodes.
    pub fn weights_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for params in &self.params {
            for tensor in params.tensors() {
                for v in tensor.data() {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        hex_string(&hasher.finalize())
    }

    pub fn weights_are_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.tensors().iter().all(|t| t.is_finite()))
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn fill_fan_in(data: &mut [f32], fan_in: usize, rng: &mut (impl Rng + ?Sized)) {
    let limit = 1.0 / (fan_in as f32).sqrt();
    for v in data {
        *v = rng.random_range(-limit..limit);
    }
}

fn batched(shape: DataShape, n: usize) -> Vec<usize> {
    let mut extents = vec![n];
    extents.extend(shape.extents());
    extents
}

fn image_chw(shape: DataShape) -> (usize, usize, usize) {
    match shape {
        DataShape::Image {
            channels,
            height,
            width,
        } => (channels, height, width),
        DataShape::Vector { .. } => unreachable!("image shape expected"),
    }
}

fn image_hw(shape: DataShape) -> (usize, usize) {
    let (_, h, w) = image_chw(shape);
    (h, w)
}

fn batchnorm_features(shape: DataShape) -> usize {
    match shape {
        DataShape::Image { channels, .. } => channels,
        DataShape::Vector { features } => features,
    }
}

fn batchnorm_layout(shape: DataShape) -> (usize, usize) {
    match shape {
        DataShape::Image {
            channels,
            height,
            width,
        } => (channels, height * width),
        DataShape::Vector { features } => (features, 1),
    }
}

fn pad_of(padding: Padding, kernel: usize) -> usize {
    match padding {
        Padding::Same => (kernel - 1) / 2,
        Padding::Valid => 0,
    }
}
