//! Minimal trainable CNN engine: enough layer kinds to express every node
//! classifier used by the hierarchy and its fine-tuning baselines, with
//! deterministic seeded training on the CPU.
//!
//! Weights and activations are `f32`; loss and batch-norm statistics are
//! accumulated in `f64`.

mod checkpoint;
mod layers;
mod network;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, spec_hash};
pub use network::{Gradients, Mode, Network};
pub use train::{sgd_update, train_network, SgdState, TrainOutcome, TrainingSchedule, TrainingSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the data flowing between layers, without the batch extent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataShape {
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    Vector {
        features: usize,
    },
}

impl DataShape {
    pub fn feature_count(&self) -> usize {
        match *self {
            DataShape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
            DataShape::Vector { features } => features,
        }
    }

    /// Shape of one sample as tensor extents (no batch axis).
    pub fn extents(&self) -> Vec<usize> {
        match *self {
            DataShape::Image {
                channels,
                height,
                width,
            } => vec![channels, height, width],
            DataShape::Vector { features } => vec![features],
        }
    }
}

impl std::fmt::Display for DataShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            DataShape::Image {
                channels,
                height,
                width,
            } => write!(f, "{channels}x{height}x{width}"),
            DataShape::Vector { features } => write!(f, "{features}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    /// Zero padding of (kernel - 1) / 2 on each side; preserves H and W at
    /// stride 1. Requires an odd kernel.
    #[default]
    Same,
    Valid,
}

/// One layer of a network description. Convolution and fully-connected
/// layers carry a `block` tag (e.g. `"CONV-2"`, `"FC"`) naming the group they
/// belong to; weight counting and fine-tuning depths select layers by block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv {
        block: String,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
    },
    MaxPool {
        window: usize,
    },
    AvgPool {
        window: usize,
    },
    FullyConnected {
        block: String,
        in_features: usize,
        out_features: usize,
    },
    Relu,
    Dropout {
        probability: f32,
    },
    BatchNorm,
    Softmax,
}

fn default_stride() -> usize {
    1
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "max-pool",
            LayerSpec::AvgPool { .. } => "avg-pool",
            LayerSpec::FullyConnected { .. } => "fully-connected",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::BatchNorm => "batch-norm",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn block(&self) -> Option<&str> {
        match self {
            LayerSpec::Conv { block, .. } | LayerSpec::FullyConnected { block, .. } => {
                Some(block.as_str())
            }
            _ => None,
        }
    }

    /// Count of multiplicative weights (kernel / matrix elements). Biases and
    /// batch-norm parameters are deliberately excluded: this definition is
    /// what the training-effort accounting uses throughout.
    pub fn weight_count(&self) -> u64 {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (out_channels * in_channels * kernel * kernel) as u64,
            LayerSpec::FullyConnected {
                in_features,
                out_features,
                ..
            } => (in_features * out_features) as u64,
            _ => 0,
        }
    }

    fn output_shape(&self, index: usize, input: DataShape) -> Result<DataShape> {
        let err = |expected: String, got: String| Error::ShapeMismatch {
            layer: format!("layer {index} ({})", self.kind_name()),
            expected,
            got,
        };
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => match input {
                DataShape::Image {
                    channels,
                    height,
                    width,
                } => {
                    if channels != in_channels {
                        return Err(err(
                            format!("{in_channels} input channels"),
                            format!("{channels}"),
                        ));
                    }
                    if stride == 0 || kernel == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {index}: conv kernel and stride must be positive"
                        )));
                    }
                    if padding == Padding::Same && kernel % 2 == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {index}: same-padding requires an odd kernel"
                        )));
                    }
                    let pad = match padding {
                        Padding::Same => (kernel - 1) / 2,
                        Padding::Valid => 0,
                    };
                    if height + 2 * pad < kernel || width + 2 * pad < kernel {
                        return Err(err(
                            format!("input at least {kernel}x{kernel}"),
                            format!("{height}x{width}"),
                        ));
                    }
                    Ok(DataShape::Image {
                        channels: out_channels,
                        height: (height + 2 * pad - kernel) / stride + 1,
                        width: (width + 2 * pad - kernel) / stride + 1,
                    })
                }
                other => Err(err("image input".into(), other.to_string())),
            },
            LayerSpec::MaxPool { window } | LayerSpec::AvgPool { window } => match input {
                DataShape::Image {
                    channels,
                    height,
                    width,
                } => {
                    if window == 0 || height < window || width < window {
                        return Err(err(
                            format!("input at least {window}x{window}"),
                            format!("{height}x{width}"),
                        ));
                    }
                    Ok(DataShape::Image {
                        channels,
                        height: height / window,
                        width: width / window,
                    })
                }
                other => Err(err("image input".into(), other.to_string())),
            },
            LayerSpec::FullyConnected {
                in_features,
                out_features,
                ..
            } => {
                let got = input.feature_count();
                if got != in_features {
                    return Err(err(format!("{in_features} features"), format!("{got}")));
                }
                Ok(DataShape::Vector {
                    features: out_features,
                })
            }
            LayerSpec::Relu | LayerSpec::BatchNorm => Ok(input),
            LayerSpec::Dropout { probability } => {
                if !(0.0..1.0).contains(&probability) {
                    return Err(Error::InvalidSpec(format!(
                        "layer {index}: dropout probability must be in [0, 1), got {probability}"
                    )));
                }
                Ok(input)
            }
            LayerSpec::Softmax => match input {
                DataShape::Vector { .. } => Ok(input),
                other => Err(err("vector input".into(), other.to_string())),
            },
        }
    }
}

/// Layer-by-layer description of one classifier: the serializable identity of
/// a network. Round-trips through JSON unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: DataShape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input: DataShape, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec { input, layers };
        spec.shape_chain()?;
        Ok(spec)
    }

    /// The shape entering each layer, plus the final output shape; validates
    /// that consecutive layers chain consistently.
    pub fn shape_chain(&self) -> Result<Vec<DataShape>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut current = self.input;
        shapes.push(current);
        for (index, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Softmax) && index + 1 != self.layers.len() {
                return Err(Error::InvalidSpec(
                    "softmax is only supported as the final layer".into(),
                ));
            }
            current = layer.output_shape(index, current)?;
            shapes.push(current);
        }
        if self.class_count() == 0 {
            return Err(Error::InvalidSpec(
                "network needs a fully-connected output layer".into(),
            ));
        }
        Ok(shapes)
    }

    /// Output class count: the out-features of the last fully-connected layer.
    pub fn class_count(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|layer| match layer {
                LayerSpec::FullyConnected { out_features, .. } => Some(*out_features),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Index of the last fully-connected layer (the classifier head).
    pub(crate) fn output_layer_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|layer| matches!(layer, LayerSpec::FullyConnected { .. }))
    }

    /// Distinct block tags in layer order.
    pub fn blocks(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for layer in &self.layers {
            if let Some(block) = layer.block() {
                if !seen.iter().any(|b| b == block) {
                    seen.push(block.to_string());
                }
            }
        }
        seen
    }

    /// Serialize as a human-readable text document.
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let spec: NetworkSpec = serde_json::from_str(text)?;
        spec.shape_chain()?;
        Ok(spec)
    }
}

/// Count multiplicative weights (convolution kernels and fully-connected
/// matrices), optionally restricted to the named layer blocks. Biases and
/// batch-norm parameters are excluded.
pub fn count_weights(spec: &NetworkSpec, subset: Option<&[String]>) -> Result<u64> {
    if let Some(blocks) = subset {
        let known = spec.blocks();
        for block in blocks {
            if !known.iter().any(|b| b == block) {
                return Err(Error::UnknownLayerBlock(block.clone()));
            }
        }
    }
    let total = spec
        .layers
        .iter()
        .filter(|layer| match (subset, layer.block()) {
            (Some(blocks), Some(block)) => blocks.iter().any(|b| b == block),
            (Some(_), None) => false,
            (None, _) => true,
        })
        .map(LayerSpec::weight_count)
        .sum();
    Ok(total)
}
