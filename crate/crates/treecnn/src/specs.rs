//! Catalog of network architectures: the full-scale root/branch/baseline
//! CNNs used by the image benchmarks, plus shrunken desk-scale counterparts
//! that train in minutes on a CPU.
//!
//! Every convolution is followed by batch-norm and ReLU, uses same-padding,
//! and pooling windows are 2x2 with stride 2, so spatial extents halve at
//! each pooling step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DataShape, LayerSpec, NetworkSpec, Padding};

/// Named architecture families resolvable from run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpecFamily {
    /// Two-way root router for the 32x32 RGB six-class experiment.
    Cifar10Root,
    /// Branch classifier for the 32x32 RGB experiments.
    Cifar10Branch,
    /// The 11-layer VGG-style fine-tuning baseline.
    NetworkB,
    /// Root router for the 100-class experiment.
    Cifar100Root,
    /// Branch classifier for the 100-class experiment.
    Cifar100Branch,
    /// Small grayscale root router (desk scale).
    DeskRoot,
    /// Small grayscale branch classifier (desk scale).
    DeskBranch,
    /// Small grayscale fine-tuning baseline (desk scale).
    DeskB,
}

impl SpecFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SpecFamily::Cifar10Root => "cifar10-root",
            SpecFamily::Cifar10Branch => "cifar10-branch",
            SpecFamily::NetworkB => "network-b",
            SpecFamily::Cifar100Root => "cifar100-root",
            SpecFamily::Cifar100Branch => "cifar100-branch",
            SpecFamily::DeskRoot => "desk-root",
            SpecFamily::DeskBranch => "desk-branch",
            SpecFamily::DeskB => "desk-b",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "cifar10-root" => SpecFamily::Cifar10Root,
            "cifar10-branch" => SpecFamily::Cifar10Branch,
            "network-b" => SpecFamily::NetworkB,
            "cifar100-root" => SpecFamily::Cifar100Root,
            "cifar100-branch" => SpecFamily::Cifar100Branch,
            "desk-root" => SpecFamily::DeskRoot,
            "desk-branch" => SpecFamily::DeskBranch,
            "desk-b" => SpecFamily::DeskB,
            other => {
                return Err(Error::Config(format!("unknown network family {other:?}")))
            }
        })
    }

    pub fn default_input(&self) -> DataShape {
        match self {
            SpecFamily::DeskRoot | SpecFamily::DeskBranch | SpecFamily::DeskB => {
                DataShape::Image {
                    channels: 1,
                    height: 28,
                    width: 28,
                }
            }
            _ => DataShape::Image {
                channels: 3,
                height: 32,
                width: 32,
            },
        }
    }

    /// Build the family for `outputs` classes at its default input size.
    pub fn build(&self, outputs: usize) -> Result<NetworkSpec> {
        self.build_scaled(outputs, self.default_input(), 1.0)
    }

    /// Build with a custom input shape and a width shrink factor (channel
    /// counts and hidden FC widths scale by `shrink`, floored at 4).
    pub fn build_scaled(
        &self,
        outputs: usize,
        input: DataShape,
        shrink: f32,
    ) -> Result<NetworkSpec> {
        if outputs == 0 {
            return Err(Error::Config("networks need at least one output".into()));
        }
        let mut b = Builder::new(input, shrink)?;
        match self {
            SpecFamily::Cifar10Root => {
                b.conv("CONV-1", 64, 5)?;
                b.max_pool()?;
                b.conv("CONV-2", 128, 3)?;
                b.dropout(0.5);
                b.conv("CONV-2", 128, 3)?;
                b.max_pool()?;
                b.fc_hidden("FC", 512)?;
                b.dropout(0.5);
                b.fc_hidden("FC", 128)?;
                b.dropout(0.5);
                b.fc_output_relu("FC", outputs)?;
            }
            SpecFamily::Cifar10Branch => {
                b.conv("CONV-1", 32, 5)?;
                b.max_pool()?;
                b.dropout(0.25);
                b.conv("CONV-2", 64, 5)?;
                b.max_pool()?;
                b.dropout(0.25);
                b.conv("CONV-3", 64, 3)?;
                b.avg_pool()?;
                b.dropout(0.25);
                b.fc_hidden("FC", 128)?;
                b.dropout(0.5);
                b.fc_output_relu("FC", outputs)?;
            }
            SpecFamily::NetworkB => {
                for (block, channels) in [
                    ("CONV-1", 64),
                    ("CONV-2", 128),
                    ("CONV-3", 256),
                    ("CONV-4", 512),
                ] {
                    b.conv(block, channels, 3)?;
                    b.dropout(0.5);
                    b.conv(block, channels, 3)?;
                    if block == "CONV-4" {
                        b.avg_pool()?;
                    } else {
                        b.max_pool()?;
                    }
                }
                b.fc_hidden("FC", 1024)?;
                b.dropout(0.5);
                b.fc_hidden("FC", 1024)?;
                b.dropout(0.5);
                b.fc_output("FC", outputs)?;
            }
            SpecFamily::Cifar100Root => {
                b.conv("CONV-1", 64, 5)?;
                b.max_pool()?;
                b.conv("CONV-2", 128, 3)?;
                b.dropout(0.5);
                b.conv("CONV-2", 128, 3)?;
                b.max_pool()?;
                b.conv("CONV-3", 256, 3)?;
                b.dropout(0.5);
                b.conv("CONV-3", 256, 3)?;
                b.avg_pool()?;
                b.fc_hidden("FC", 1024)?;
                b.dropout(0.5);
                b.fc_hidden("FC", 1024)?;
                b.dropout(0.5);
                b.fc_output("FC", outputs)?;
            }
            SpecFamily::Cifar100Branch => {
                b.conv("CONV-1", 32, 5)?;
                b.max_pool()?;
                b.dropout(0.25);
                b.conv("CONV-2", 64, 5)?;
                b.max_pool()?;
                b.dropout(0.25);
                b.conv("CONV-3", 64, 3)?;
                b.dropout(0.5);
                b.conv("CONV-3", 64, 3)?;
                b.avg_pool()?;
                b.fc_hidden("FC", 512)?;
                b.dropout(0.5);
                b.fc_hidden("FC", 128)?;
                b.dropout(0.5);
                b.fc_output("FC", outputs)?;
            }
            SpecFamily::DeskRoot => {
                b.conv("CONV-1", 8, 3)?;
                b.max_pool()?;
                b.conv("CONV-2", 16, 3)?;
                b.max_pool()?;
                b.fc_hidden("FC", 32)?;
                b.fc_output("FC", outputs)?;
            }
            SpecFamily::DeskBranch => {
                b.conv("CONV-1", 8, 3)?;
                b.max_pool()?;
                b.conv("CONV-2", 8, 3)?;
                b.max_pool()?;
                b.fc_hidden("FC", 32)?;
                b.fc_output("FC", outputs)?;
            }
            SpecFamily::DeskB => {
                b.conv("CONV-1", 12, 3)?;
                b.max_pool()?;
                b.conv("CONV-2", 24, 3)?;
                b.max_pool()?;
                b.conv("CONV-3", 64, 3)?;
                b.max_pool()?;
                b.fc_hidden("FC", 48)?;
                b.fc_output("FC", outputs)?;
            }
        }
        b.finish()
    }
}

/// Incrementally assembles a spec while tracking the data shape.
struct Builder {
    layers: Vec<LayerSpec>,
    input: DataShape,
    channels: usize,
    height: usize,
    width: usize,
    /// Feature count once the FC stack has started.
    features: Option<usize>,
    shrink: f32,
}

impl Builder {
    fn new(input: DataShape, shrink: f32) -> Result<Self> {
        let DataShape::Image {
            channels,
            height,
            width,
        } = input
        else {
            return Err(Error::Config("catalog networks take image input".into()));
        };
        if !(shrink > 0.0 && shrink <= 1.0) {
            return Err(Error::Config("shrink factor must be in (0, 1]".into()));
        }
        Ok(Builder {
            layers: Vec::new(),
            input,
            channels,
            height,
            width,
            features: None,
            shrink,
        })
    }

    fn scaled(&self, width: usize) -> usize {
        ((width as f32 * self.shrink).round() as usize).max(4)
    }

    fn conv(&mut self, block: &str, out_channels: usize, kernel: usize) -> Result<()> {
        let out_channels = self.scaled(out_channels);
        self.layers.push(LayerSpec::Conv {
            block: block.into(),
            in_channels: self.channels,
            out_channels,
            kernel,
            stride: 1,
            padding: Padding::Same,
        });
        self.layers.push(LayerSpec::BatchNorm);
        self.layers.push(LayerSpec::Relu);
        self.channels = out_channels;
        Ok(())
    }

    fn max_pool(&mut self) -> Result<()> {
        self.pool(true)
    }

    fn avg_pool(&mut self) -> Result<()> {
        self.pool(false)
    }

    fn pool(&mut self, max: bool) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return Err(Error::Config("input too small for this architecture".into()));
        }
        self.layers.push(if max {
            LayerSpec::MaxPool { window: 2 }
        } else {
            LayerSpec::AvgPool { window: 2 }
        });
        self.height /= 2;
        self.width /= 2;
        Ok(())
    }

    fn dropout(&mut self, probability: f32) {
        self.layers.push(LayerSpec::Dropout { probability });
    }

    fn flat_features(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn fc(&mut self, block: &str, out_features: usize) {
        let in_features = self.features.unwrap_or_else(|| self.flat_features());
        self.layers.push(LayerSpec::FullyConnected {
            block: block.into(),
            in_features,
            out_features,
        });
        self.features = Some(out_features);
    }

    fn fc_hidden(&mut self, block: &str, out_features: usize) -> Result<()> {
        let out_features = self.scaled(out_features);
        self.fc(block, out_features);
        self.layers.push(LayerSpec::Relu);
        Ok(())
    }

    /// Output head without an activation.
    fn fc_output(&mut self, block: &str, outputs: usize) -> Result<()> {
        self.fc(block, outputs);
        self.layers.push(LayerSpec::Softmax);
        Ok(())
    }

    /// Output head with ReLU before the softmax (as the 32x32 node CNNs use).
    fn fc_output_relu(&mut self, block: &str, outputs: usize) -> Result<()> {
        self.fc(block, outputs);
        self.layers.push(LayerSpec::Relu);
        self.layers.push(LayerSpec::Softmax);
        Ok(())
    }

    fn finish(self) -> Result<NetworkSpec> {
        NetworkSpec::new(self.input, self.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::count_weights;

    #[test]
    fn network_b_weight_arithmetic() {
        let spec = SpecFamily::NetworkB.build(100).unwrap();
        assert_eq!(count_weights(&spec, None).unwrap(), 7_931_584);
        let fc = count_weights(&spec, Some(&["FC".to_string()])).unwrap();
        assert_eq!(fc, 3_248_128);
        // FC share of the full network.
        let fraction = fc as f64 / 7_931_584.0;
        assert!((fraction - 0.41).abs() < 0.005, "fraction {fraction}");
    }

    #[test]
    fn network_b_block_weights() {
        let spec = SpecFamily::NetworkB.build(100).unwrap();
        let block = |name: &str| count_weights(&spec, Some(&[name.to_string()])).unwrap();
        assert_eq!(block("CONV-1"), 3 * 64 * 9 + 64 * 64 * 9);
        assert_eq!(block("CONV-2"), 64 * 128 * 9 + 128 * 128 * 9);
        assert_eq!(block("CONV-3"), 128 * 256 * 9 + 256 * 256 * 9);
        assert_eq!(block("CONV-4"), 256 * 512 * 9 + 512 * 512 * 9);
    }

    #[test]
    fn catalog_families_chain_consistently() {
        for family in [
            SpecFamily::Cifar10Root,
            SpecFamily::Cifar10Branch,
            SpecFamily::NetworkB,
            SpecFamily::Cifar100Root,
            SpecFamily::Cifar100Branch,
            SpecFamily::DeskRoot,
            SpecFamily::DeskBranch,
            SpecFamily::DeskB,
        ] {
            let spec = family.build(7).unwrap();
            assert_eq!(spec.class_count(), 7, "{}", family.name());
            spec.shape_chain().unwrap();
        }
    }

    #[test]
    fn fc_input_sizes_match_the_published_tables() {
        let fc_in = |family: SpecFamily| {
            let spec = family.build(10).unwrap();
            spec.layers
                .iter()
                .find_map(|l| match l {
                    LayerSpec::FullyConnected { in_features, .. } => Some(*in_features),
                    _ => None,
                })
                .unwrap()
        };
        assert_eq!(fc_in(SpecFamily::Cifar10Root), 8192);
        assert_eq!(fc_in(SpecFamily::Cifar10Branch), 1024);
        assert_eq!(fc_in(SpecFamily::NetworkB), 2048);
        assert_eq!(fc_in(SpecFamily::Cifar100Root), 4096);
        assert_eq!(fc_in(SpecFamily::Cifar100Branch), 1024);
    }

    #[test]
    fn desk_networks_stay_small() {
        for family in [SpecFamily::DeskRoot, SpecFamily::DeskBranch, SpecFamily::DeskB] {
            let weights = count_weights(&family.build(10).unwrap(), None).unwrap();
            assert!(weights <= 50_000, "{} has {weights} weights", family.name());
        }
    }

    #[test]
    fn shrink_reduces_widths() {
        let full = SpecFamily::DeskRoot.build(4).unwrap();
        let half = SpecFamily::DeskRoot
            .build_scaled(
                4,
                SpecFamily::DeskRoot.default_input(),
                0.5,
            )
            .unwrap();
        assert!(count_weights(&half, None).unwrap() < count_weights(&full, None).unwrap());
        assert_eq!(half.class_count(), 4);
    }

    #[test]
    fn family_names_round_trip() {
        for family in [
            SpecFamily::Cifar10Root,
            SpecFamily::NetworkB,
            SpecFamily::DeskB,
        ] {
            assert_eq!(SpecFamily::from_name(family.name()).unwrap(), family);
        }
        assert!(SpecFamily::from_name("nope").is_err());
    }
}
