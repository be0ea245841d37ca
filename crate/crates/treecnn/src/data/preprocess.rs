//! Image preprocessing: per-image global contrast normalization followed by
//! an optional ZCA whitening transform fit on the training split only.

use nalgebra::{DMatrix, DVector};

use super::DatasetSplit;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-image global contrast normalization: zero mean and unit standard
/// deviation, with `epsilon` flooring the scale so constant images map to
/// all zeros instead of dividing by zero.
pub fn gcn_image(image: &mut Tensor, epsilon: f64) {
    let n = image.len() as f64;
    let mut sum = 0.0f64;
    for &v in image.data() {
        sum += v as f64;
    }
    let mean = sum / n;
    let mut sq = 0.0f64;
    for &v in image.data() {
        let d = v as f64 - mean;
        sq += d * d;
    }
    let scale = (sq / n).sqrt().max(epsilon);
    for v in image.data_mut() {
        *v = ((*v as f64 - mean) / scale) as f32;
    }
}

/// A whitening transform fit on training pixels: `x -> W (x - mean)` with
/// `W = U (S + eps I)^(-1/2) U^T` from the eigendecomposition of the pixel
/// covariance.
#[derive(Debug, Clone)]
pub struct ZcaTransform {
    mean: DVector<f64>,
    matrix: DMatrix<f64>,
}

impl ZcaTransform {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, image: &mut Tensor) {
        assert_eq!(image.len(), self.dimension(), "image/transform mismatch");
        let x = DVector::from_iterator(image.len(), image.data().iter().map(|&v| v as f64));
        let whitened = &self.matrix * (x - &self.mean);
        for (v, w) in image.data_mut().iter_mut().zip(whitened.iter()) {
            *v = *w as f32;
        }
    }
}

/// Fit ZCA whitening on the (already contrast-normalized) training images.
pub fn fit_zca(images: &[&Tensor], epsilon: f64) -> Result<ZcaTransform> {
    let first = images.first().ok_or(Error::EmptyDataset)?;
    let dim = first.len();
    let n = images.len() as f64;

    let mut mean: DVector<f64> = DVector::zeros(dim);
    for image in images {
        for (m, &v) in mean.iter_mut().zip(image.data()) {
            *m += v as f64 / n;
        }
    }
    let mut cov: DMatrix<f64> = DMatrix::zeros(dim, dim);
    for image in images {
        let x = DVector::from_iterator(dim, image.data().iter().map(|&v| v as f64)) - &mean;
        for i in 0..dim {
            let xi = x[i] / n;
            for j in i..dim {
                cov[(i, j)] += xi * x[j];
            }
        }
    }
    for i in 0..dim {
        for j in i + 1..dim {
            cov[(j, i)] = cov[(i, j)];
        }
    }

    let eigen = cov.symmetric_eigen();
    let mut scaled = DMatrix::zeros(dim, dim);
    for (col, value) in eigen.eigenvalues.iter().enumerate() {
        let inv_sqrt = 1.0 / (value.max(0.0) + epsilon).sqrt();
        scaled
            .column_mut(col)
            .copy_from(&(eigen.eigenvectors.column(col) * inv_sqrt));
    }
    let matrix = &scaled * eigen.eigenvectors.transpose();
    Ok(ZcaTransform { mean, matrix })
}

/// Preprocessing pipeline: statistics are fit on the training split only and
/// then applied unchanged to any split.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub gcn_epsilon: f64,
    pub zca: Option<ZcaTransform>,
}

impl Preprocessor {
    /// Fit on the training split. `zca_epsilon = None` disables whitening
    /// (the desk-scale default).
    pub fn fit(train: &DatasetSplit, zca_epsilon: Option<f64>) -> Result<Self> {
        let gcn_epsilon = 1e-8;
        let zca = match zca_epsilon {
            None => None,
            Some(epsilon) => {
                if train.is_empty() {
                    return Err(Error::EmptyDataset);
                }
                let mut normalized: Vec<Tensor> = train
                    .records()
                    .iter()
                    .map(|r| r.pixels.clone())
                    .collect();
                for image in &mut normalized {
                    gcn_image(image, gcn_epsilon);
                }
                let refs: Vec<&Tensor> = normalized.iter().collect();
                Some(fit_zca(&refs, epsilon)?)
            }
        };
        Ok(Preprocessor { gcn_epsilon, zca })
    }

    pub fn apply(&self, split: &mut DatasetSplit) {
        let epsilon = self.gcn_epsilon;
        split.map_pixels(|image| {
            gcn_image(image, epsilon);
            if let Some(zca) = &self.zca {
                zca.apply(image);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    #[test]
    fn constant_image_becomes_all_zeros() {
        let mut image = Tensor::filled(&[1, 3, 3], 47.0);
        gcn_image(&mut image, 1e-8);
        assert!(image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gcn_gives_zero_mean_unit_scale() {
        let mut rng = substream(5, "gcn");
        let data: Vec<f32> = (0..64).map(|_| rng.random_range(0.0..255.0)).collect();
        let mut image = Tensor::from_vec(&[1, 8, 8], data).unwrap();
        gcn_image(&mut image, 1e-8);
        let mean: f64 = image.data().iter().map(|&v| v as f64).sum::<f64>() / 64.0;
        let var: f64 = image.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn zca_whitens_the_training_covariance() {
        // Correlated 4-d synthetic pixels; after whitening the covariance
        // should be close to the identity (up to the regularizer).
        let mut rng = substream(6, "zca");
        let images: Vec<Tensor> = (0..400)
            .map(|_| {
                // Full-rank mixing of four independent latents.
                let a: f32 = rng.random_range(-1.0..1.0);
                let b: f32 = rng.random_range(-1.0..1.0);
                let c: f32 = rng.random_range(-1.0..1.0);
                let d: f32 = rng.random_range(-1.0..1.0);
                Tensor::from_vec(
                    &[1, 2, 2],
                    vec![a, 0.8 * a + 0.6 * b, 0.3 * b + 0.7 * c, 0.5 * c + 0.5 * d],
                )
                .unwrap()
            })
            .collect();
        let refs: Vec<&Tensor> = images.iter().collect();
        let zca = fit_zca(&refs, 1e-6).unwrap();

        let mut transformed = images.clone();
        for image in &mut transformed {
            zca.apply(image);
        }
        let n = transformed.len() as f64;
        let dim = 4;
        let mut mean = vec![0.0f64; dim];
        for image in &transformed {
            for (m, &v) in mean.iter_mut().zip(image.data()) {
                *m += v as f64 / n;
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                let mut cov = 0.0f64;
                for image in &transformed {
                    cov += (image.data()[i] as f64 - mean[i]) * (image.data()[j] as f64 - mean[j]);
                }
                cov /= n;
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (cov - expected).abs() < 0.05,
                    "cov[{i}][{j}] = {cov}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn statistics_ignore_the_test_split() {
        use crate::data::{DatasetSplit, ImageRecord, SplitTag};
        use crate::tree::ClassLabel;
        let mut rng = substream(7, "leak");
        let make = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
            DatasetSplit::new(
                (0..n)
                    .map(|_| ImageRecord {
                        pixels: Tensor::from_vec(
                            &[1, 2, 2],
                            (0..4).map(|_| rng.random_range(0.0..255.0)).collect(),
                        )
                        .unwrap(),
                        class: ClassLabel(0),
                    })
                    .collect(),
                SplitTag::Train,
            )
            .unwrap()
        };
        let train = make(&mut rng, 50);
        let preprocessor = Preprocessor::fit(&train, Some(1e-2)).unwrap();

        // Applying to two different "test" splits uses the identical
        // transform: the same input pixel maps to the same output.
        let probe = ImageRecord {
            pixels: Tensor::from_vec(&[1, 2, 2], vec![10.0, 60.0, 110.0, 160.0]).unwrap(),
            class: ClassLabel(0),
        };
        let mut a = DatasetSplit::new(vec![probe.clone()], SplitTag::Test).unwrap();
        let mut b = make(&mut rng, 10);
        let mut b_records = b.records().to_vec();
        b_records.push(probe);
        b = DatasetSplit::new(b_records, SplitTag::Test).unwrap();
        preprocessor.apply(&mut a);
        preprocessor.apply(&mut b);
        assert_eq!(
            a.records()[0].pixels.data(),
            b.records().last().unwrap().pixels.data()
        );
    }
}
