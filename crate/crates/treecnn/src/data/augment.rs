use rand::Rng;

use crate::tensor::Tensor;

/// Mirror each image about its vertical axis independently with probability
/// `p`. Training-time augmentation; one draw per image in order.
pub fn augment_flip(images: &mut [Tensor], p: f32, rng: &mut impl Rng) {
    if p <= 0.0 {
        return;
    }
    for image in images {
        if rng.random::<f32>() < p {
            *image = image.flip_horizontal();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn images(n: usize) -> Vec<Tensor> {
        (0..n)
            .map(|i| {
                let mut t = Tensor::zeros(&[1, 1, 2]);
                t.data_mut()[0] = i as f32;
                t.data_mut()[1] = -(i as f32);
                t
            })
            .collect()
    }

    #[test]
    fn zero_probability_is_identity() {
        let mut batch = images(10);
        let expected = batch.clone();
        let mut rng = substream(0, "flip");
        augment_flip(&mut batch, 0.0, &mut rng);
        assert_eq!(batch, expected);
    }

    #[test]
    fn certain_flip_applied_twice_is_identity() {
        let mut batch = images(10);
        let expected = batch.clone();
        let mut rng = substream(0, "flip");
        augment_flip(&mut batch, 1.0, &mut rng);
        assert_ne!(batch, expected);
        augment_flip(&mut batch, 1.0, &mut rng);
        assert_eq!(batch, expected);
    }

    #[test]
    fn flip_count_is_binomially_plausible() {
        let n = 10_000;
        let mut batch = images(n);
        let mut rng = substream(12, "flip");
        augment_flip(&mut batch, 0.5, &mut rng);
        let flipped = batch
            .iter()
            .enumerate()
            .filter(|(i, t)| t.data()[0] != *i as f32)
            .count();
        // 3 sigma around n/2 for p = 0.5.
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(
            (flipped as f64 - 5000.0).abs() < 3.0 * sigma,
            "{flipped} flips"
        );
    }
}
