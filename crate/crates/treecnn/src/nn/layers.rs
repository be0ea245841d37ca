//! Forward and backward kernels for each layer kind. All kernels take raw
//! slices plus explicit extents; `Network` owns shape bookkeeping.

/// 2-d convolution over `[N, Ci, H, W]` with kernel `[Co, Ci, K, K]`.
#[allow(clippy::too_many_arguments)]
pub fn conv_forward(
    input: &[f32],
    output: &mut [f32],
    kernel: &[f32],
    bias: &[f32],
    n: usize,
    (ci, h, w): (usize, usize, usize),
    (co, k, stride, pad): (usize, usize, usize, usize),
    (ho, wo): (usize, usize),
) {
    let in_plane = h * w;
    let out_plane = ho * wo;
    for img in 0..n {
        let in_base = img * ci * in_plane;
        let out_base = img * co * out_plane;
        for oc in 0..co {
            let out_at = out_base + oc * out_plane;
            output[out_at..out_at + out_plane].fill(bias[oc]);
            for icn in 0..ci {
                let in_at = in_base + icn * in_plane;
                let k_at = (oc * ci + icn) * k * k;
                for kh in 0..k {
                    for kw in 0..k {
                        let weight = kernel[k_at + kh * k + kw];
                        if weight == 0.0 {
                            continue;
                        }
                        for oh in 0..ho {
                            let ih = oh * stride + kh;
                            if ih < pad || ih - pad >= h {
                                continue;
                            }
                            let in_row = in_at + (ih - pad) * w;
                            let out_row = out_at + oh * wo;
                            for ow in 0..wo {
                                let iw = ow * stride + kw;
                                if iw < pad || iw - pad >= w {
                                    continue;
                                }
                                output[out_row + ow] += weight * input[in_row + iw - pad];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Backward pass of the convolution: gradients for input, kernel, and bias.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    input: &[f32],
    grad_output: &[f32],
    grad_input: &mut [f32],
    kernel: &[f32],
    grad_kernel: &mut [f32],
    grad_bias: &mut [f32],
    n: usize,
    (ci, h, w): (usize, usize, usize),
    (co, k, stride, pad): (usize, usize, usize, usize),
    (ho, wo): (usize, usize),
) {
    let in_plane = h * w;
    let out_plane = ho * wo;
    for img in 0..n {
        let in_base = img * ci * in_plane;
        let out_base = img * co * out_plane;
        for oc in 0..co {
            let out_at = out_base + oc * out_plane;
            let mut bias_acc = 0.0f32;
            for v in &grad_output[out_at..out_at + out_plane] {
                bias_acc += v;
            }
            grad_bias[oc] += bias_acc;
            for icn in 0..ci {
                let in_at = in_base + icn * in_plane;
                let k_at = (oc * ci + icn) * k * k;
                for kh in 0..k {
                    for kw in 0..k {
                        let weight = kernel[k_at + kh * k + kw];
                        let mut kernel_acc = 0.0f32;
                        for oh in 0..ho {
                            let ih = oh * stride + kh;
                            if ih < pad || ih - pad >= h {
                                continue;
                            }
                            let in_row = in_at + (ih - pad) * w;
                            let out_row = out_at + oh * wo;
                            for ow in 0..wo {
                                let iw = ow * stride + kw;
                                if iw < pad || iw - pad >= w {
                                    continue;
                                }
                                let g = grad_output[out_row + ow];
                                kernel_acc += g * input[in_row + iw - pad];
                                grad_input[in_row + iw - pad] += g * weight;
                            }
                        }
                        grad_kernel[k_at + kh * k + kw] += kernel_acc;
                    }
                }
            }
        }
    }
}

/// Max pooling with window == stride. Records the flat argmax per output cell
/// (first maximum wins on ties, keeping eval deterministic).
pub fn maxpool_forward(
    input: &[f32],
    output: &mut [f32],
    argmax: &mut [u32],
    n: usize,
    (c, h, w): (usize, usize, usize),
    window: usize,
    (ho, wo): (usize, usize),
) {
    let in_plane = h * w;
    let out_plane = ho * wo;
    for plane in 0..n * c {
        let in_at = plane * in_plane;
        let out_at = plane * out_plane;
        for oh in 0..ho {
            for ow in 0..wo {
                let mut best = f32::NEG_INFINITY;
                let mut best_at = 0usize;
                for kh in 0..window {
                    let row = in_at + (oh * window + kh) * w + ow * window;
                    for kw in 0..window {
                        let v = input[row + kw];
                        if v > best {
                            best = v;
                            best_at = row + kw;
                        }
                    }
                }
                output[out_at + oh * wo + ow] = best;
                argmax[out_at + oh * wo + ow] = best_at as u32;
            }
        }
    }
}

pub fn maxpool_backward(grad_output: &[f32], grad_input: &mut [f32], argmax: &[u32]) {
    for (g, &at) in grad_output.iter().zip(argmax) {
        grad_input[at as usize] += g;
    }
}

pub fn avgpool_forward(
    input: &[f32],
    output: &mut [f32],
    n: usize,
    (c, h, w): (usize, usize, usize),
    window: usize,
    (ho, wo): (usize, usize),
) {
    let in_plane = h * w;
    let out_plane = ho * wo;
    let scale = 1.0 / (window * window) as f32;
    for plane in 0..n * c {
        let in_at = plane * in_plane;
        let out_at = plane * out_plane;
        for oh in 0..ho {
            for ow in 0..wo {
                let mut acc = 0.0f32;
                for kh in 0..window {
                    let row = in_at + (oh * window + kh) * w + ow * window;
                    for kw in 0..window {
                        acc += input[row + kw];
                    }
                }
                output[out_at + oh * wo + ow] = acc * scale;
            }
        }
    }
}

pub fn avgpool_backward(
    grad_output: &[f32],
    grad_input: &mut [f32],
    n: usize,
    (c, h, w): (usize, usize, usize),
    window: usize,
    (ho, wo): (usize, usize),
) {
    let in_plane = h * w;
    let out_plane = ho * wo;
    let scale = 1.0 / (window * window) as f32;
    for plane in 0..n * c {
        let in_at = plane * in_plane;
        let out_at = plane * out_plane;
        for oh in 0..ho {
            for ow in 0..wo {
                let g = grad_output[out_at + oh * wo + ow] * scale;
                for kh in 0..window {
                    let row = in_at + (oh * window + kh) * w + ow * window;
                    for kw in 0..window {
                        grad_input[row + kw] += g;
                    }
                }
            }
        }
    }
}

/// Fully-connected layer: `output[n][o] = bias[o] + sum_i weight[o][i] * input[n][i]`.
pub fn fc_forward(
    input: &[f32],
    output: &mut [f32],
    weight: &[f32],
    bias: &[f32],
    n: usize,
    in_features: usize,
    out_features: usize,
) {
    for img in 0..n {
        let x = &input[img * in_features..(img + 1) * in_features];
        let out_row = &mut output[img * out_features..(img + 1) * out_features];
        for (o, out) in out_row.iter_mut().enumerate() {
            let row = &weight[o * in_features..(o + 1) * in_features];
            let mut acc = 0.0f32;
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            *out = acc + bias[o];
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn fc_backward(
    input: &[f32],
    grad_output: &[f32],
    grad_input: &mut [f32],
    weight: &[f32],
    grad_weight: &mut [f32],
    grad_bias: &mut [f32],
    n: usize,
    in_features: usize,
    out_features: usize,
) {
    for img in 0..n {
        let x = &input[img * in_features..(img + 1) * in_features];
        let gy = &grad_output[img * out_features..(img + 1) * out_features];
        let gx = &mut grad_input[img * in_features..(img + 1) * in_features];
        for (o, &g) in gy.iter().enumerate() {
            grad_bias[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = &weight[o * in_features..(o + 1) * in_features];
            let grow = &mut grad_weight[o * in_features..(o + 1) * in_features];
            for i in 0..in_features {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
    }
}

pub fn relu_forward(input: &[f32], output: &mut [f32]) {
    for (o, &x) in output.iter_mut().zip(input) {
        *o = if x > 0.0 { x } else { 0.0 };
    }
}

pub fn relu_backward(input: &[f32], grad_output: &[f32], grad_input: &mut [f32]) {
    for ((gi, &go), &x) in grad_input.iter_mut().zip(grad_output).zip(input) {
        *gi = if x > 0.0 { go } else { 0.0 };
    }
}

/// Inverted dropout: kept activations are scaled by 1/(1-p) during training
/// so eval needs no rescaling. `mask` holds the per-element scale (0 or 1/(1-p)).
pub fn dropout_forward(
    input: &[f32],
    output: &mut [f32],
    mask: &mut [f32],
    probability: f32,
    rng: &mut impl rand::Rng,
) {
    let keep_scale = 1.0 / (1.0 - probability);
    for ((o, m), &x) in output.iter_mut().zip(mask.iter_mut()).zip(input) {
        // One draw per element in row-major order; this order is part of the
        // reproducibility contract.
        *m = if rng.random::<f32>() < probability {
            0.0
        } else {
            keep_scale
        };
        *o = x * *m;
    }
}

pub fn dropout_backward(grad_output: &[f32], grad_input: &mut [f32], mask: &[f32]) {
    for ((gi, &go), &m) in grad_input.iter_mut().zip(grad_output).zip(mask) {
        *gi = go * m;
    }
}

pub const BATCH_NORM_EPSILON: f64 = 1e-5;

/// Per-feature mean/inv-std cached by the batch-norm forward pass for reuse
/// in the backward pass.
pub struct BatchNormCache {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Batch normalization over features. For image input a feature is a channel
/// (statistics pooled over N, H, W); for vector input it is a component
/// (statistics over N). `group` is the number of values per (sample, feature)
/// pair, i.e. H*W for images and 1 for vectors.
///
/// Statistics are accumulated in f64. When `update` is supplied, running
/// statistics are advanced with momentum 0.1 (population variance).
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward_train(
    input: &[f32],
    output: &mut [f32],
    gamma: &[f32],
    beta: &[f32],
    n: usize,
    features: usize,
    group: usize,
    update: Option<(&mut [f32], &mut [f32])>,
    cache: &mut BatchNormCache,
) {
    let count = (n * group) as f64;
    for f in 0..features {
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for img in 0..n {
            let at = (img * features + f) * group;
            for &v in &input[at..at + group] {
                let v = v as f64;
                sum += v;
                sum_sq += v * v;
            }
        }
        let mean = sum / count;
        let var = (sum_sq / count - mean * mean).max(0.0);
        let inv_std = 1.0 / (var + BATCH_NORM_EPSILON).sqrt();
        cache.mean[f] = mean;
        cache.inv_std[f] = inv_std;
        let g = gamma[f] as f64;
        let b = beta[f] as f64;
        for img in 0..n {
            let at = (img * features + f) * group;
            for (o, &v) in output[at..at + group].iter_mut().zip(&input[at..at + group]) {
                *o = ((v as f64 - mean) * inv_std * g + b) as f32;
            }
        }
    }
    if let Some((running_mean, running_var)) = update {
        const MOMENTUM: f64 = 0.1;
        for f in 0..features {
            let mean = cache.mean[f];
            let var = 1.0 / (cache.inv_std[f] * cache.inv_std[f]) - BATCH_NORM_EPSILON;
            running_mean[f] =
                ((1.0 - MOMENTUM) * running_mean[f] as f64 + MOMENTUM * mean) as f32;
            running_var[f] =
                ((1.0 - MOMENTUM) * running_var[f] as f64 + MOMENTUM * var.max(0.0)) as f32;
        }
    }
}

pub fn batchnorm_forward_eval(
    input: &[f32],
    output: &mut [f32],
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
    n: usize,
    features: usize,
    group: usize,
) {
    for f in 0..features {
        let mean = running_mean[f] as f64;
        let inv_std = 1.0 / (running_var[f] as f64 + BATCH_NORM_EPSILON).sqrt();
        let g = gamma[f] as f64;
        let b = beta[f] as f64;
        for img in 0..n {
            let at = (img * features + f) * group;
            for (o, &v) in output[at..at + group].iter_mut().zip(&input[at..at + group]) {
                *o = ((v as f64 - mean) * inv_std * g + b) as f32;
            }
        }
    }
}

/// Standard batch-norm backward over the cached batch statistics.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_backward(
    input: &[f32],
    grad_output: &[f32],
    grad_input: &mut [f32],
    gamma: &[f32],
    grad_gamma: &mut [f32],
    grad_beta: &mut [f32],
    n: usize,
    features: usize,
    group: usize,
    cache: &BatchNormCache,
) {
    let count = (n * group) as f64;
    for f in 0..features {
        let mean = cache.mean[f];
        let inv_std = cache.inv_std[f];
        let mut sum_gy = 0.0f64;
        let mut sum_gy_xhat = 0.0f64;
        for img in 0..n {
            let at = (img * features + f) * group;
            for (&gy, &x) in grad_output[at..at + group].iter().zip(&input[at..at + group]) {
                let xhat = (x as f64 - mean) * inv_std;
                sum_gy += gy as f64;
                sum_gy_xhat += gy as f64 * xhat;
            }
        }
        grad_gamma[f] += sum_gy_xhat as f32;
        grad_beta[f] += sum_gy as f32;
        let g = gamma[f] as f64;
        let scale = g * inv_std / count;
        for img in 0..n {
            let at = (img * features + f) * group;
            for (gi, (&gy, &x)) in grad_input[at..at + group]
                .iter_mut()
                .zip(grad_output[at..at + group].iter().zip(&input[at..at + group]))
            {
                let xhat = (x as f64 - mean) * inv_std;
                *gi = (scale * (count * gy as f64 - sum_gy - xhat * sum_gy_xhat)) as f32;
            }
        }
    }
}

/// Row-wise softmax with max-shift for stability; accumulates in f64.
pub fn softmax_rows(input: &[f32], output: &mut [f32], n: usize, features: usize) {
    for img in 0..n {
        let row = &input[img * features..(img + 1) * features];
        let out = &mut output[img * features..(img + 1) * features];
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0f64;
        for (o, &v) in out.iter_mut().zip(row) {
            let e = ((v as f64) - max).exp();
            *o = e as f32;
            sum += e;
        }
        for o in out.iter_mut() {
            *o = ((*o as f64) / sum) as f32;
        }
    }
}

/// Mean softmax cross-entropy over the batch, with the logits gradient
/// `(softmax - one_hot) / n` written into `grad_logits`.
pub fn softmax_cross_entropy(
    logits: &[f32],
    labels: &[usize],
    grad_logits: &mut [f32],
    n: usize,
    classes: usize,
) -> f64 {
    let mut loss = 0.0f64;
    let inv_n = 1.0 / n as f64;
    for img in 0..n {
        let row = &logits[img * classes..(img + 1) * classes];
        let grad = &mut grad_logits[img * classes..(img + 1) * classes];
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0f64;
        for &v in row {
            sum += ((v as f64) - max).exp();
        }
        let log_sum = sum.ln() + max;
        loss += log_sum - row[labels[img]] as f64;
        for (c, (g, &v)) in grad.iter_mut().zip(row).enumerate() {
            let p = ((v as f64) - log_sum).exp();
            let y = if c == labels[img] { 1.0 } else { 0.0 };
            *g = ((p - y) * inv_n) as f32;
        }
    }
    loss * inv_n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_are_probability_vectors() {
        let input = vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0];
        let mut out = vec![0.0; 6];
        softmax_rows(&input, &mut out, 2, 3);
        for row in out.chunks(3) {
            let sum: f64 = row.iter().map(|&v| v as f64).sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn uniform_logits_give_ln_n_loss() {
        let logits = vec![0.5; 8];
        let mut grad = vec![0.0; 8];
        let loss = softmax_cross_entropy(&logits, &[0, 3], &mut grad, 2, 4);
        assert!((loss - (4.0f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_logits_give_near_zero_loss() {
        let mut logits = vec![0.0; 4];
        logits[2] = 50.0;
        let mut grad = vec![0.0; 4];
        let loss = softmax_cross_entropy(&logits, &[2], &mut grad, 1, 4);
        assert!(loss < 1e-6);
    }

    #[test]
    fn maxpool_first_max_wins_ties() {
        let input = vec![1.0, 1.0, 0.0, 0.0];
        let mut out = vec![0.0; 1];
        let mut argmax = vec![0u32; 1];
        maxpool_forward(&input, &mut out, &mut argmax, 1, (1, 2, 2), 2, (1, 1));
        assert_eq!(out[0], 1.0);
        assert_eq!(argmax[0], 0);
    }
}
