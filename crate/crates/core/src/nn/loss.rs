use super::tensor::Tensor;

#[inline]
pub fn sigmoid(z: f32) -> f32 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross entropy on logits; returns `(loss, d loss / d logits)`.
pub fn bce_with_logits(logits: &Tensor, targets: &[f32]) -> (f32, Tensor) {
    assert_eq!(logits.data().len(), targets.len(), "bce: target count mismatch");
    let count = targets.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(logits.shape());
    for ((g, &z), &t) in grad.data_mut().iter_mut().zip(logits.data()).zip(targets) {
        loss += (z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()) as f64;
        *g = ((sigmoid(z) - t) as f64 / count) as f32;
    }
    ((loss / count) as f32, grad)
}

/// Numerically stable softmax over each row of length `k`.
pub fn softmax(row: &[f32]) -> Vec<f32> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = row.iter().map(|&v| ((v - max) as f64).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / sum) as f32).collect()
}

/// Mean categorical cross entropy over `[n, k, 1, 1]` logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> (f32, Tensor) {
    let n = logits.n();
    let k = logits.sample_len();
    assert_eq!(labels.len(), n, "cross entropy: label count mismatch");
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(logits.shape());
    for (i, &label) in labels.iter().enumerate() {
        let p = softmax(logits.sample(i));
        loss -= (p[label].max(1e-12) as f64).ln();
        for (j, g) in grad.sample_mut(i).iter_mut().enumerate() {
            let t = if j == label { 1.0 } else { 0.0 };
            *g = (p[j] - t) / n as f32;
        }
    }
    debug_assert!(k > 0);
    ((loss / n as f64) as f32, grad)
}
