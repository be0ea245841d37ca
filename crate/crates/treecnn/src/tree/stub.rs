//! Stub routers: fixed decision functions for structural tests, plan replay,
//! and examples that exercise the hierarchy without trained networks.

use serde::{Deserialize, Serialize};

use super::{ClassLabel, TreeNode};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "router", rename_all = "kebab-case")]
pub enum StubRouter {
    /// Emits the same score vector for every input.
    Constant(Vec<f32>),
    /// Reads the class label embedded in the image's first value (see
    /// [`marker_image`]) and routes it to the child owning that class per the
    /// node's lookup table; unknown labels get uniform scores.
    LabelRouting,
}

impl StubRouter {
    pub fn scores(&self, node: &TreeNode, image: &Tensor) -> Vec<f32> {
        match self {
            StubRouter::Constant(scores) => scores.clone(),
            StubRouter::LabelRouting => {
                let count = node.children().len().max(1);
                let label = ClassLabel(image.data().first().copied().unwrap_or(-1.0) as u32);
                match node.label_transform().child_index(label) {
                    Some(index) => {
                        let mut scores = vec![0.0; count];
                        scores[index] = 1.0;
                        scores
                    }
                    None => vec![1.0 / count as f32; count],
                }
            }
        }
    }
}

/// An image whose first value encodes its class label, understood by
/// [`StubRouter::LabelRouting`].
pub fn marker_image(shape: &[usize], class: ClassLabel) -> Tensor {
    let mut image = Tensor::zeros(shape);
    image.data_mut()[0] = class.0 as f32;
    image
}
