use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchitectureSpec, LayerSpec};
use super::conv::{Conv1d, Conv2d};
use super::layers::{
    Activation, ActivationLayer, BatchNorm, Dense, Dropout, Flatten, GlobalAvgPool2d, Layer, MaxPool, Mode,
};
use super::loss::{argmax, softmax};
use super::recurrent::{Bidirectional, Lstm};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Windows are pushed through the network this many at a time in inference.
pub const INFER_CHUNK: usize = 64;

/// Seed of the dropout stream for layer `index` of a network seeded `seed`.
fn dropout_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// A concrete network: its declarative spec and the live layers.
///
/// Once trained it also serves as the fitted model; the state is the
/// ordered concatenation of every layer's parameters and buffers.
#[derive(Debug)]
pub struct Network {
    pub spec: ArchitectureSpec,
    pub layers: Vec<Box<dyn Layer>>,
}

pub type TrainedNet = Network;

impl Network {
    /// Builds freshly initialized layers for `spec`.
    pub fn build(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        let shapes = spec.output_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers: Vec<Box<dyn Layer>> = Vec::with_capacity(spec.layers.len());
        for (i, (layer, input)) in spec.layers.iter().zip(&shapes).enumerate() {
            let last = *input.last().unwrap();
            let built: Box<dyn Layer> = match layer {
                LayerSpec::Dense { units, activation } => Box::new(Dense::init(&mut rng, last, *units, *activation)),
                LayerSpec::SoftmaxOutput { classes } => {
                    Box::new(Dense::init(&mut rng, last, *classes, Activation::Linear))
                }
                LayerSpec::Conv1d {
                    filters,
                    kernel,
                    activation,
                    ..
                } => Box::new(Conv1d::init(&mut rng, last, *filters, *kernel, *activation)),
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    padding,
                    activation,
                } => Box::new(Conv2d::init(
                    &mut rng,
                    last,
                    *filters,
                    (kernel[0], kernel[1]),
                    *activation,
                    *padding,
                )),
                LayerSpec::Maxpool { pool, stride, .. } => Box::new(MaxPool::new(pool.clone(), *stride)?),
                LayerSpec::Batchnorm => Box::new(BatchNorm::new(last)),
                LayerSpec::Activation { activation } => Box::new(ActivationLayer::new(*activation)),
                LayerSpec::Dropout { rate } => Box::new(Dropout::new(*rate, dropout_seed(seed, i))?),
                LayerSpec::GlobalAvgPool => Box::new(GlobalAvgPool2d::new()),
                LayerSpec::Flatten => Box::new(Flatten::new()),
                LayerSpec::Lstm(s) => Box::new(Lstm::init(&mut rng, last, s.units, s.return_sequences)),
                LayerSpec::Bidirectional { inner } => {
                    Box::new(Bidirectional::init(&mut rng, last, inner.units, inner.return_sequences))
                }
            };
            layers.push(built);
        }
        Ok(Network {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn classes(&self) -> usize {
        self.spec.classes()
    }

    /// Scalars per window.
    pub fn window_len(&self) -> usize {
        self.spec.input_shape.iter().product()
    }

    /// Stacks row-major windows into a batch tensor of the declared input shape.
    pub fn batch_tensor(&self, windows: &[&[f64]]) -> Result<Tensor> {
        let per = self.window_len();
        let mut data = Vec::with_capacity(windows.len() * per);
        for w in windows {
            if w.len() != per {
                return Err(Error::shape(format!(
                    "{} expects windows of {per} values ({:?}), got {}",
                    self.spec.name,
                    self.spec.input_shape,
                    w.len()
                )));
            }
            data.extend_from_slice(w);
        }
        let mut shape = vec![windows.len()];
        shape.extend_from_slice(&self.spec.input_shape);
        Tensor::from_vec(&shape, data)
    }

    /// Logits of a batch; caches activations for `backward`.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = self.layers[0].forward(x, mode)?;
        for layer in &mut self.layers[1..] {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.layers[0].infer(x)?;
        for layer in &self.layers[1..] {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Backpropagates `∂loss/∂logits`, returning `∂loss/∂input`.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(|l| l.zero_grad());
    }

    pub fn param_grads(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        self.layers.iter_mut().flat_map(|l| l.param_grads()).collect()
    }

    /// Class probabilities, `(windows, classes)` row-major.
    pub fn predict_proba(&self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(windows.len() * self.classes());
        for chunk in windows.chunks(INFER_CHUNK) {
            let x = self.batch_tensor(chunk)?;
            let p = softmax(&self.infer(&x)?)?;
            if !p.all_finite() {
                return Err(Error::domain("network produced non-finite outputs"));
            }
            out.extend(p.data);
        }
        Ok(out)
    }

    /// Argmax of the softmax per window, lowest class on ties.
    pub fn predict(&self, windows: &[&[f64]]) -> Result<Vec<usize>> {
        let c = self.classes();
        Ok(self.predict_proba(windows)?.chunks_exact(c).map(argmax).collect())
    }

    /// Every parameter then every buffer, layer by layer.
    pub fn state(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for t in layer.params().into_iter().chain(layer.buffers()) {
                out.extend_from_slice(&t.data);
            }
        }
        out
    }

    pub fn state_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.params()
                    .iter()
                    .chain(l.buffers().iter())
                    .map(|t| t.len())
                    .sum::<usize>()
            })
            .sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.params().iter().map(|t| t.len()).sum::<usize>())
            .sum()
    }

    /// Inverse of [`Network::state`].
    pub fn load_state(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.state_len() {
            return Err(Error::Format(format!(
                "{} needs {} state values, got {}",
                self.spec.name,
                self.state_len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite value in network state".into()));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            for t in layer.params_mut() {
                let n = t.len();
                t.data.copy_from_slice(&values[at..at + n]);
                at += n;
            }
            for t in layer.buffers_mut() {
                let n = t.len();
                t.data.copy_from_slice(&values[at..at + n]);
                at += n;
            }
        }
        Ok(())
    }

    /// Running variances must stay non-negative and all state finite.
    pub fn validate(&self) -> Result<()> {
        for layer in &self.layers {
            if layer.kind() == "batchnorm" && layer.buffers()[1].data.iter().any(|&v| v < 0.0) {
                return Err(Error::Format("negative running variance".into()));
            }
        }
        if self.state().iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite network state".into()));
        }
        Ok(())
    }
}
