use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::arch::ArchitectureSpec;
use super::layers::Mode;
use super::loss::{argmax, softmax_cross_entropy};
use super::net::Network;
use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};

const SHUFFLE_STREAM: u64 = 0x5348;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Splits `0..n` into consecutive batches of `size`, folding a trailing
/// singleton into its predecessor (batch norm cannot train on one sample).
pub fn batch_bounds(n: usize, size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(size.max(1)).map(|s| (s, (s + size).min(n))).collect();
    if out.len() >= 2 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, end) = out.pop().unwrap();
        out.last_mut().unwrap().1 = end;
    }
    out
}

fn check_dataset(spec: &ArchitectureSpec, ds: &WindowedDataset, what: &str) -> Result<()> {
    let per: usize = spec.input_shape.iter().product();
    if spec.input_shape[0] != ds.j || per != ds.j * ds.n {
        return Err(Error::shape(format!(
            "{what} windows are ({}, {}) but {} expects {:?}",
            ds.j, ds.n, spec.name, spec.input_shape
        )));
    }
    if ds.class_count != spec.classes() {
        return Err(Error::shape(format!(
            "{what} set has {} classes, network outputs {}",
            ds.class_count,
            spec.classes()
        )));
    }
    Ok(())
}

/// Mean loss and accuracy of `net` on `ds` in inference mode.
pub fn evaluate(net: &Network, ds: &WindowedDataset) -> Result<(f64, f64)> {
    if ds.is_empty() {
        return Err(Error::shape("cannot evaluate on an empty dataset"));
    }
    let c = net.classes();
    let windows: Vec<&[f64]> = ds.iter_windows().collect();
    let proba = net.predict_proba(&windows)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (row, &y) in proba.chunks_exact(c).zip(&ds.labels) {
        loss -= row[y].max(1e-300).ln();
        correct += usize::from(argmax(row) == y);
    }
    Ok((loss / ds.len() as f64, correct as f64 / ds.len() as f64))
}

/// Mini-batch Adam on categorical cross entropy under `spec.training`.
///
/// Training windows are reshuffled every epoch from a stream of `seed`;
/// the validation set, when non-empty, is only logged.
pub fn train(
    spec: &ArchitectureSpec,
    train_ds: &WindowedDataset,
    val_ds: &WindowedDataset,
    seed: u64,
) -> Result<(Network, Vec<EpochLog>)> {
    spec.validate()?;
    check_dataset(spec, train_ds, "training")?;
    if !val_ds.is_empty() {
        check_dataset(spec, val_ds, "validation")?;
    }
    if train_ds.is_empty() && spec.training.epochs > 0 {
        return Err(Error::shape("training set is empty"));
    }
    let mut net = Network::build(spec, seed)?;
    let mut adam = Adam::new(spec.training.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut log = Vec::with_capacity(spec.training.epochs);
    let c = spec.classes();
    for epoch in 0..spec.training.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, &(start, end)) in batch_bounds(order.len(), spec.training.batch_size).iter().enumerate() {
            let idx = &order[start..end];
            let windows: Vec<&[f64]> = idx.iter().map(|&i| train_ds.window(i)).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train_ds.labels[i]).collect();
            let x = net.batch_tensor(&windows)?;
            let logits = net.forward(&x, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    message: format!("loss became {loss}"),
                });
            }
            loss_sum += loss * idx.len() as f64;
            correct += logits
                .data
                .chunks_exact(c)
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
            net.zero_grad();
            net.backward(&grad)?;
            adam.update(net.param_grads())?;
        }
        let (val_loss, val_accuracy) = if val_ds.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&net, val_ds)?;
            (Some(l), Some(a))
        };
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_accuracy: correct as f64 / order.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    net.validate()?;
    Ok((net, log))
}
