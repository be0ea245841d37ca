use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense n-dimensional array of `f32` values in row-major order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                layer: "tensor".into(),
                expected: format!("{expected} elements for shape {shape:?}"),
                got: format!("{} elements", data.len()),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::ShapeMismatch {
                layer: "reshape".into(),
                expected: format!("{} elements", self.data.len()),
                got: format!("shape {shape:?} = {expected} elements"),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Checked element access for tests and diagnostics; hot paths index the
    /// raw slice directly.
    pub fn at(&self, index: &[usize]) -> f32 {
        assert_eq!(index.len(), self.shape.len(), "rank mismatch");
        let mut flat = 0;
        for (i, (&ix, &extent)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < extent, "index {ix} out of bounds at axis {i}");
            flat = flat * extent + ix;
        }
        self.data[flat]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mirror an image tensor about its vertical axis. Accepts `[C, H, W]`;
    /// used by training-time augmentation.
    pub fn flip_horizontal(&self) -> Tensor {
        assert_eq!(self.shape.len(), 3, "flip_horizontal expects [C, H, W]");
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let mut out = vec![0.0f32; self.data.len()];
        for ci in 0..c {
            for hi in 0..h {
                let row = (ci * h + hi) * w;
                for wi in 0..w {
                    out[row + wi] = self.data[row + (w - 1 - wi)];
                }
            }
        }
        Tensor {
            shape: self.shape.clone(),
            data: out,
        }
    }

    /// Stack single images `[C, H, W]` into a batch `[N, C, H, W]`.
    pub fn stack(images: &[&Tensor]) -> Result<Tensor> {
        let first = images.first().ok_or(Error::EmptyDataset)?;
        let mut data = Vec::with_capacity(first.len() * images.len());
        for image in images {
            if image.shape() != first.shape() {
                return Err(Error::ShapeMismatch {
                    layer: "batch".into(),
                    expected: format!("{:?}", first.shape()),
                    got: format!("{:?}", image.shape()),
                });
            }
            data.extend_from_slice(image.data());
        }
        let mut shape = vec![images.len()];
        shape.extend_from_slice(first.shape());
        Tensor::from_vec(&shape, data)
    }
}
