use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Row-wise softmax of `(B, C)` logits, stabilized by the row maximum.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    logits.expect_rank(2, "softmax")?;
    let c = logits.last_dim();
    let mut out = logits.data.clone();
    for row in out.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::from_vec(&logits.shape, out)
}

/// Mean categorical cross entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    logits.expect_rank(2, "cross entropy")?;
    let (b, c) = (logits.shape[0], logits.shape[1]);
    if c < 2 {
        return Err(Error::domain("cross entropy needs at least 2 classes"));
    }
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::domain(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = softmax(logits)?;
    let mut loss = 0.0;
    for (i, (row, &y)) in grad.data.chunks_exact_mut(c).zip(labels).enumerate() {
        let logit_row = &logits.data[i * c..(i + 1) * c];
        let max = logit_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logit_row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - logit_row[y];
        row[y] -= 1.0;
    }
    let inv = 1.0 / b as f64;
    grad.data.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
