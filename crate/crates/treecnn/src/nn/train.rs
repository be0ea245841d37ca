use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{LayerGrads, LayerParams};
use super::{Gradients, Mode, Network};
use crate::error::{Error, Result};
use crate::rng::{shuffled_indices, substream};
use crate::tensor::Tensor;

/// Hyper-parameters of one training run. A fixed `seed` makes the run
/// bit-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_learning_rate: f32,
    /// Learning rate is divided by this factor at `lr_decay_start` and then
    /// every `lr_decay_interval` epochs after that.
    pub lr_decay_factor: f32,
    pub lr_decay_start: usize,
    pub lr_decay_interval: usize,
    pub momentum: f32,
    pub weight_decay: f32,
    /// Probability of mirroring each training image horizontally per epoch.
    pub flip_probability: f32,
    pub seed: u64,
}

impl TrainingSchedule {
    /// The full-scale recipe: 300 epochs of SGD with momentum 0.9, weight
    /// decay 1e-3, lr 0.1 held for 200 epochs then divided by 10 every 50,
    /// and random horizontal flips.
    pub fn full_scale(seed: u64) -> Self {
        TrainingSchedule {
            epochs: 300,
            batch_size: 100,
            base_learning_rate: 0.1,
            lr_decay_factor: 10.0,
            lr_decay_start: 200,
            lr_decay_interval: 50,
            momentum: 0.9,
            weight_decay: 1e-3,
            flip_probability: 0.5,
            seed,
        }
    }

    /// A small-budget recipe for CPU-sized experiments.
    pub fn desk_scale(epochs: usize, seed: u64) -> Self {
        TrainingSchedule {
            epochs,
            batch_size: 32,
            base_learning_rate: 0.05,
            lr_decay_factor: 10.0,
            lr_decay_start: epochs.saturating_sub(epochs / 4).max(1),
            lr_decay_interval: usize::MAX,
            momentum: 0.9,
            weight_decay: 1e-3,
            flip_probability: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.base_learning_rate <= 0.0 || self.lr_decay_factor <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 || !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(
                "weight decay must be >= 0 and flip probability in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f32 {
        if epoch < self.lr_decay_start {
            return self.base_learning_rate;
        }
        let extra = (epoch - self.lr_decay_start) / self.lr_decay_interval.max(1);
        self.base_learning_rate / self.lr_decay_factor.powi(1 + extra as i32)
    }
}

/// Momentum buffers, one per parameter tensor, shaped like the network.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity: Vec<Vec<Tensor>>,
}

impl SgdState {
    pub fn new(net: &Network) -> Self {
        let velocity = net
            .params
            .iter()
            .map(|p| {
                p.tensors()
                    .into_iter()
                    .map(|t| Tensor::zeros(t.shape()))
                    .collect()
            })
            .collect();
        SgdState { velocity }
    }
}

/// One SGD-with-momentum step: `v = mu * v - lr * (g + lambda * w)` then
/// `w += v`. Weight decay applies to convolution kernels and FC matrices
/// only; biases and batch-norm parameters are not decayed. Frozen layers are
/// skipped entirely.
pub fn sgd_update(
    net: &mut Network,
    grads: &Gradients,
    state: &mut SgdState,
    schedule: &TrainingSchedule,
    epoch: usize,
) {
    let lr = schedule.learning_rate(epoch);
    let mu = schedule.momentum;
    let lambda = schedule.weight_decay;
    let trainable: Vec<bool> = (0..net.params.len())
        .map(|i| net.is_layer_trainable(i))
        .collect();
    for (i, (params, layer_grads)) in net.params.iter_mut().zip(&grads.layers).enumerate() {
        if !trainable[i] {
            continue;
        }
        let grad_tensors: Vec<(&Tensor, bool)> = match layer_grads {
            LayerGrads::Conv { kernel, bias } => vec![(kernel, true), (bias, false)],
            LayerGrads::FullyConnected { weight, bias } => vec![(weight, true), (bias, false)],
            LayerGrads::BatchNorm { gamma, beta } => vec![(gamma, false), (beta, false)],
            LayerGrads::None => vec![],
        };
        // Running batch-norm statistics carry no gradient; only the leading
        // tensors of each layer are trainable.
        let mut weights = match params {
            LayerParams::Conv { kernel, bias } => vec![kernel, bias],
            LayerParams::FullyConnected { weight, bias } => vec![weight, bias],
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            LayerParams::None => vec![],
        };
        for (slot, (grad, decayed)) in grad_tensors.into_iter().enumerate() {
            let weight = &mut weights[slot];
            let velocity = &mut state.velocity[i][slot];
            let lambda = if decayed { lambda } else { 0.0 };
            for ((w, v), &g) in weight
                .data_mut()
                .iter_mut()
                .zip(velocity.data_mut())
                .zip(grad.data())
            {
                *v = mu * *v - lr * (g + lambda * *w);
                *w += *v;
            }
        }
    }
}

/// Labeled images ready for supervised training: `images[i]` has class index
/// `labels[i]` in the network's output space.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Distinct training samples used (for effort accounting); zero when no
    /// epoch ran.
    pub samples_seen: u64,
    pub epochs_run: usize,
    pub final_epoch_loss: f64,
}

/// Train `net` on `data` for the scheduled number of epochs.
///
/// Each epoch reshuffles the data, applies per-image horizontal flips with
/// the scheduled probability, and runs mini-batch SGD with momentum. All
/// randomness comes from per-epoch substreams of `schedule.seed`, so two runs
/// from the same starting weights produce identical final weights.
pub fn train_network(
    net: &mut Network,
    data: &TrainingSet,
    schedule: &TrainingSchedule,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    schedule.validate()?;
    let classes = net.class_count();
    for &label in &data.labels {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
    }
    if schedule.epochs == 0 {
        return Ok(TrainOutcome {
            samples_seen: 0,
            epochs_run: 0,
            final_epoch_loss: f64::NAN,
        });
    }

    net.set_mode(Mode::Train);
    let mut state = SgdState::new(net);
    let mut epoch_loss = 0.0;
    for epoch in 0..schedule.epochs {
        let mut rng = substream(schedule.seed, &format!("epoch:{epoch}"));
        let order = shuffled_indices(&mut rng, data.len());
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(schedule.batch_size) {
            let mut views: Vec<Tensor> = Vec::with_capacity(chunk.len());
            for &index in chunk {
                let image = &data.images[index];
                if schedule.flip_probability > 0.0
                    && rng.random::<f32>() < schedule.flip_probability
                {
                    views.push(image.flip_horizontal());
                } else {
                    views.push(image.clone());
                }
            }
            let refs: Vec<&Tensor> = views.iter().collect();
            let batch = Tensor::stack(&refs)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, grads) = net.loss_and_gradients(&batch, &labels, &mut rng)?;
            sgd_update(net, &grads, &mut state, schedule, epoch);
            loss_sum += loss;
            batches += 1;
        }
        epoch_loss = loss_sum / batches as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch} loss")));
        }
    }
    if !net.weights_are_finite() {
        return Err(Error::NonFinite("trained weights".into()));
    }
    net.set_mode(Mode::Eval);
    Ok(TrainOutcome {
        samples_seen: data.len() as u64,
        epochs_run: schedule.epochs,
        final_epoch_loss: epoch_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DataShape, LayerSpec, NetworkSpec};
    use crate::rng::substream;

    fn one_weight_net(w: f32) -> Network {
        let spec = NetworkSpec::new(
            DataShape::Vector { features: 1 },
            vec![LayerSpec::FullyConnected {
                block: "FC".into(),
                in_features: 1,
                out_features: 1,
            }],
        )
        .unwrap();
        let mut rng = substream(0, "w");
        let mut net = Network::new(spec, &mut rng).unwrap();
        set_single_weight(&mut net, w);
        net
    }

    fn set_single_weight(net: &mut Network, w: f32) {
        let LayerParams::FullyConnected { weight, .. } = &mut net.params[0] else {
            unreachable!()
        };
        weight.data_mut()[0] = w;
    }

    fn single_weight(net: &Network) -> f32 {
        let LayerParams::FullyConnected { weight, .. } = &net.params[0] else {
            unreachable!()
        };
        weight.data()[0]
    }

    fn step(net: &mut Network, state: &mut SgdState, g: f32, schedule: &TrainingSchedule) {
        let grads = Gradients {
            layers: vec![LayerGrads::FullyConnected {
                weight: Tensor::from_vec(&[1, 1], vec![g]).unwrap(),
                bias: Tensor::zeros(&[1]),
            }],
        };
        sgd_update(net, &grads, state, schedule, 0);
    }

    fn plain_schedule(lr: f32, momentum: f32, weight_decay: f32) -> TrainingSchedule {
        TrainingSchedule {
            epochs: 1,
            batch_size: 1,
            base_learning_rate: lr,
            lr_decay_factor: 10.0,
            lr_decay_start: 100,
            lr_decay_interval: 50,
            momentum,
            weight_decay,
            flip_probability: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn bare_gradient_step() {
        let mut net = one_weight_net(0.0);
        let mut state = SgdState::new(&net);
        step(&mut net, &mut state, 1.0, &plain_schedule(1.0, 0.0, 0.0));
        assert_eq!(single_weight(&net), -1.0);
    }

    #[test]
    fn weight_decay_alone_shrinks_weights() {
        let mut net = one_weight_net(2.0);
        let mut state = SgdState::new(&net);
        let lr = 0.1;
        let lambda = 0.5;
        step(&mut net, &mut state, 0.0, &plain_schedule(lr, 0.0, lambda));
        assert!((single_weight(&net) - 2.0 * (1.0 - lr * lambda)).abs() < 1e-6);
    }

    #[test]
    fn momentum_matches_scalar_recursion() {
        let mut net = one_weight_net(0.0);
        let mut state = SgdState::new(&net);
        let schedule = plain_schedule(0.5, 0.9, 0.0);
        // Hand recursion: v1 = -0.5*g1; w1 = v1; v2 = 0.9*v1 - 0.5*g2; w2 = w1 + v2.
        step(&mut net, &mut state, 1.0, &schedule);
        assert!((single_weight(&net) - (-0.5)).abs() < 1e-6);
        step(&mut net, &mut state, 2.0, &schedule);
        let v2 = 0.9 * (-0.5) - 0.5 * 2.0;
        assert!((single_weight(&net) - (-0.5 + v2)).abs() < 1e-6);
    }

    #[test]
    fn learning_rate_decay_schedule() {
        let schedule = TrainingSchedule::full_scale(0);
        assert_eq!(schedule.learning_rate(0), 0.1);
        assert_eq!(schedule.learning_rate(199), 0.1);
        assert!((schedule.learning_rate(200) - 0.01).abs() < 1e-9);
        assert!((schedule.learning_rate(249) - 0.01).abs() < 1e-9);
        assert!((schedule.learning_rate(250) - 0.001).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_leaves_network_unchanged() {
        let mut net = one_weight_net(1.5);
        let checksum = net.weights_checksum();
        let data = TrainingSet {
            images: vec![Tensor::from_vec(&[1], vec![1.0]).unwrap()],
            labels: vec![0],
        };
        let mut schedule = plain_schedule(0.1, 0.0, 0.0);
        schedule.epochs = 0;
        let outcome = train_network(&mut net, &data, &schedule).unwrap();
        assert_eq!(outcome.samples_seen, 0);
        assert_eq!(net.weights_checksum(), checksum);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let mut net = one_weight_net(0.0);
        let result = train_network(&mut net, &TrainingSet::default(), &plain_schedule(0.1, 0.0, 0.0));
        assert!(matches!(result, Err(Error::EmptyDataset)));
    }
}
