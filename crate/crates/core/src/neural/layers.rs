//! Layer trait and the non-convolutional, non-recurrent layers.
//!
//! Every layer pairs a caching `forward` with a hand-derived `backward`.
//! Parameter gradients accumulate until [`Layer::zero_grad`].

use std::fmt::Debug;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, v: &mut [f64]) {
        if self == Activation::Relu {
            v.iter_mut().for_each(|x| *x = x.max(0.0));
        }
    }

    /// Masks `grad` in place given the layer's activated output.
    #[inline]
    pub(crate) fn backprop(self, out: &[f64], grad: &mut [f64]) {
        if self == Activation::Relu {
            for (g, &y) in grad.iter_mut().zip(out) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

pub trait Layer: Debug + Send + Sync {
    fn kind(&self) -> &'static str;

    /// Forward pass that caches what `backward` needs.
    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor>;

    /// Inference-mode forward pass without touching any cache.
    fn infer(&self, x: &Tensor) -> Result<Tensor>;

    /// Given `∂loss/∂output` of the last `forward`, accumulate parameter
    /// gradients and return `∂loss/∂input`.
    fn backward(&mut self, grad: &Tensor) -> Result<Tensor>;

    /// Trainable tensors.
    fn params(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    /// Gradients aligned with [`Layer::params`].
    fn grads(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    /// Each trainable tensor paired with its gradient.
    fn param_grads(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        Vec::new()
    }

    /// Non-trainable persistent state (running statistics).
    fn buffers(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }

    fn zero_grad(&mut self) {}
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let len: usize = shape.iter().product();
    Tensor {
        shape: shape.to_vec(),
        data: (0..len).map(|_| rng.random_range(-bound..bound)).collect(),
    }
}

fn missing_cache(kind: &str) -> Error {
    Error::State(format!("{kind}: backward called before forward"))
}

/// Fully connected layer over the trailing axis: `(..., in) -> (..., out)`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    grad_weight: Tensor,
    grad_bias: Tensor,
    cache: Option<(Tensor, Tensor)>,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.rank() != 2 || bias.shape != [weight.shape[1]] {
            return Err(Error::shape(format!(
                "dense weight {:?} and bias {:?} disagree",
                weight.shape, bias.shape
            )));
        }
        Ok(Dense {
            grad_weight: Tensor::zeros(&weight.shape),
            grad_bias: Tensor::zeros(&bias.shape),
            weight,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn init(rng: &mut ChaCha8Rng, inputs: usize, units: usize, activation: Activation) -> Self {
        let w = glorot(rng, &[inputs, units], inputs, units);
        Dense::new(w, Tensor::zeros(&[units]), activation).expect("consistent shapes")
    }

    fn compute(&self, x: &Tensor) -> Result<Tensor> {
        let (inputs, units) = (self.weight.shape[0], self.weight.shape[1]);
        if x.rank() < 2 || x.last_dim() != inputs {
            return Err(Error::shape(format!(
                "dense expects trailing dimension {inputs}, got shape {:?}",
                x.shape
            )));
        }
        let rows = x.len() / inputs;
        let mut out = Vec::with_capacity(rows * units);
        for _ in 0..rows {
            out.extend_from_slice(&self.bias.data);
        }
        matmul(rows, inputs, units, &x.data, &self.weight.data, &mut out, true);
        self.activation.apply(&mut out);
        let mut shape = x.shape.clone();
        *shape.last_mut().unwrap() = units;
        Tensor::from_vec(&shape, out)
    }
}

impl Layer for Dense {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = self.compute(x)?;
        self.cache = Some((x.clone(), y.clone()));
        Ok(y)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.compute(x)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (x, y) = self.cache.as_ref().ok_or_else(|| missing_cache("dense"))?;
        if grad.shape != y.shape {
            return Err(Error::shape("dense: upstream gradient shape mismatch"));
        }
        let (inputs, units) = (self.weight.shape[0], self.weight.shape[1]);
        let rows = x.len() / inputs;
        let mut g = grad.data.clone();
        self.activation.backprop(&y.data, &mut g);
        matmul_tn(inputs, rows, units, &x.data, &g, &mut self.grad_weight.data, true);
        for row in g.chunks_exact(units) {
            for (gb, v) in self.grad_bias.data.iter_mut().zip(row) {
                *gb += v;
            }
        }
        let mut dx = vec![0.0; rows * inputs];
        matmul_nt(rows, units, inputs, &g, &self.weight.data, &mut dx, false);
        Tensor::from_vec(&x.shape, dx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn grads(&self) -> Vec<&Tensor> {
        vec![&self.grad_weight, &self.grad_bias]
    }

    fn param_grads(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        vec![(&mut self.weight, &self.grad_weight), (&mut self.bias, &self.grad_bias)]
    }

    fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// Standalone element-wise activation.
#[derive(Debug, Clone)]
pub struct ActivationLayer {
    pub activation: Activation,
    cache: Option<Tensor>,
}

impl ActivationLayer {
    pub fn new(activation: Activation) -> Self {
        ActivationLayer {
            activation,
            cache: None,
        }
    }
}

impl Layer for ActivationLayer {
    fn kind(&self) -> &'static str {
        "activation"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = self.infer(x)?;
        self.cache = Some(y.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.clone();
        self.activation.apply(&mut y.data);
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let y = self.cache.as_ref().ok_or_else(|| missing_cache("activation"))?;
        let mut g = grad.clone();
        self.activation.backprop(&y.data, &mut g.data);
        Ok(g)
    }
}

/// `(N, ...) -> (N, prod(...))`.
#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten::default()
    }
}

impl Layer for Flatten {
    fn kind(&self) -> &'static str {
        "flatten"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        self.input_shape = Some(x.shape.clone());
        self.infer(x)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let n = x.batch();
        let rest = x.len().checked_div(n).unwrap_or(0);
        x.clone().reshape(&[n, rest])
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.input_shape.as_ref().ok_or_else(|| missing_cache("flatten"))?;
        grad.clone().reshape(shape)
    }
}

/// Mean over the two spatial axes: `(N, H, W, C) -> (N, C)`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool2d {
    input_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool2d {
    pub fn new() -> Self {
        GlobalAvgPool2d::default()
    }
}

impl Layer for GlobalAvgPool2d {
    fn kind(&self) -> &'static str {
        "global_avg_pool"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let y = self.infer(x)?;
        self.input_shape = Some(x.shape.clone());
        Ok(y)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(4, "global average pooling")?;
        let (n, h, w, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let mut out = vec![0.0; n * c];
        let scale = 1.0 / (h * w) as f64;
        for b in 0..n {
            let o = &mut out[b * c..(b + 1) * c];
            for cell in x.data[b * h * w * c..(b + 1) * h * w * c].chunks_exact(c) {
                for (acc, v) in o.iter_mut().zip(cell) {
                    *acc += v;
                }
            }
            o.iter_mut().for_each(|v| *v *= scale);
        }
        Tensor::from_vec(&[n, c], out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self
            .input_shape
            .clone()
            .ok_or_else(|| missing_cache("global_avg_pool"))?;
        let (n, h, w, c) = (shape[0], shape[1], shape[2], shape[3]);
        let scale = 1.0 / (h * w) as f64;
        let mut dx = Vec::with_capacity(n * h * w * c);
        for b in 0..n {
            let g = &grad.data[b * c..(b + 1) * c];
            for _ in 0..h * w {
                dx.extend(g.iter().map(|v| v * scale));
            }
        }
        Tensor::from_vec(&shape, dx)
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` in training;
/// inference is the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config("dropout", format!("rate {rate} outside [0, 1)")));
        }
        Ok(Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mask: None,
        })
    }
}

impl Layer for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Infer || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| {
                if self.rng.random::<f64>() < self.rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let data = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.mask = Some(mask);
        Tensor::from_vec(&x.shape, data)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.clone())
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match &self.mask {
            None => Ok(grad.clone()),
            Some(mask) => {
                let data = grad.data.iter().zip(mask).map(|(g, m)| g * m).collect();
                Tensor::from_vec(&grad.shape, data)
            }
        }
    }
}

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.9;

/// Per-channel normalization over every axis but the last.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    grad_gamma: Tensor,
    grad_beta: Tensor,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            grad_gamma: Tensor::zeros(&[channels]),
            grad_beta: Tensor::zeros(&[channels]),
            cache: None,
        }
    }

    fn check(&self, x: &Tensor) -> Result<usize> {
        let c = self.gamma.len();
        if x.rank() < 2 || x.last_dim() != c {
            return Err(Error::shape(format!(
                "batch norm over {c} channels got shape {:?}",
                x.shape
            )));
        }
        Ok(c)
    }
}

impl Layer for BatchNorm {
    fn kind(&self) -> &'static str {
        "batchnorm"
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        if mode == Mode::Infer {
            self.cache = None;
            return self.infer(x);
        }
        let c = self.check(x)?;
        if x.batch() < 2 {
            return Err(Error::domain("batch norm in training mode needs a batch of at least 2"));
        }
        let rows = x.len() / c;
        let mut mean = vec![0.0; c];
        for row in x.data.chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; c];
        for row in x.data.chunks_exact(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= rows as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt()).collect();
        let mut xhat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for row in x.data.chunks_exact(c) {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                xhat.push(h);
                out.push(self.gamma.data[ch] * h + self.beta.data[ch]);
            }
        }
        let unbias = rows as f64 / (rows - 1) as f64;
        for ch in 0..c {
            let rm = &mut self.running_mean.data[ch];
            *rm = BATCHNORM_MOMENTUM * *rm + (1.0 - BATCHNORM_MOMENTUM) * mean[ch];
            let rv = &mut self.running_var.data[ch];
            *rv = BATCHNORM_MOMENTUM * *rv + (1.0 - BATCHNORM_MOMENTUM) * var[ch] * unbias;
        }
        self.cache = Some(BnCache {
            xhat,
            inv_std,
            shape: x.shape.clone(),
        });
        Tensor::from_vec(&x.shape, out)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let c = self.check(x)?;
        let scale: Vec<f64> = (0..c)
            .map(|ch| self.gamma.data[ch] / (self.running_var.data[ch] + BATCHNORM_EPS).sqrt())
            .collect();
        let mut out = Vec::with_capacity(x.len());
        for row in x.data.chunks_exact(c) {
            for ch in 0..c {
                out.push((row[ch] - self.running_mean.data[ch]) * scale[ch] + self.beta.data[ch]);
            }
        }
        Tensor::from_vec(&x.shape, out)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or_else(|| missing_cache("batchnorm"))?;
        if grad.shape != cache.shape {
            return Err(Error::shape("batchnorm: upstream gradient shape mismatch"));
        }
        let c = self.gamma.len();
        let rows = grad.len() / c;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (g_row, h_row) in grad.data.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                sum_g[ch] += g_row[ch];
                sum_gx[ch] += g_row[ch] * h_row[ch];
            }
        }
        for ch in 0..c {
            self.grad_beta.data[ch] += sum_g[ch];
            self.grad_gamma.data[ch] += sum_gx[ch];
        }
        let m = rows as f64;
        let mut dx = Vec::with_capacity(grad.len());
        for (g_row, h_row) in grad.data.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                let k = self.gamma.data[ch] * cache.inv_std[ch] / m;
                dx.push(k * (m * g_row[ch] - sum_g[ch] - h_row[ch] * sum_gx[ch]));
            }
        }
        Tensor::from_vec(&cache.shape, dx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn grads(&self) -> Vec<&Tensor> {
        vec![&self.grad_gamma, &self.grad_beta]
    }

    fn param_grads(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        vec![(&mut self.gamma, &self.grad_gamma), (&mut self.beta, &self.grad_beta)]
    }

    fn buffers(&self) -> Vec<&Tensor> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    fn zero_grad(&mut self) {
        self.grad_gamma.fill(0.0);
        self.grad_beta.fill(0.0);
    }
}

/// `same`-padded max pooling window: for output `o`, inputs
/// `o*stride - pad_before .. + pool`, clipped to the valid range.
pub(crate) fn same_pool_geometry(len: usize, pool: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let pad_total = ((out - 1) * stride + pool).saturating_sub(len);
    (out, pad_total / 2)
}

/// Max pooling with `same` padding over one (time) or two (time, feature)
/// spatial axes. Gradient flows to the first maximal input of each window.
#[derive(Debug, Clone)]
pub struct MaxPool {
    pub pool: Vec<usize>,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool {
    pub fn new(pool: Vec<usize>, stride: usize) -> Result<Self> {
        if pool.is_empty() || pool.len() > 2 || pool.contains(&0) {
            return Err(Error::config("maxpool", "pool sizes must be positive (1 or 2 axes)"));
        }
        if stride == 0 {
            return Err(Error::config("maxpool", "stride must be positive"));
        }
        Ok(MaxPool {
            pool,
            stride,
            cache: None,
        })
    }

    /// Output shape plus, per output element, the flat input index it copied.
    fn compute(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let spatial = self.pool.len();
        x.expect_rank(spatial + 2, "max pooling")?;
        let n = x.shape[0];
        let c = x.last_dim();
        let h = x.shape[1];
        let w = if spatial == 2 { x.shape[2] } else { 1 };
        let (ph, pw) = (self.pool[0], if spatial == 2 { self.pool[1] } else { 1 });
        let (oh, pad_h) = same_pool_geometry(h, ph, self.stride);
        let (ow, pad_w) = if spatial == 2 {
            same_pool_geometry(w, pw, self.stride)
        } else {
            (1, 0)
        };
        let mut out = Vec::with_capacity(n * oh * ow * c);
        let mut arg = Vec::with_capacity(n * oh * ow * c);
        for b in 0..n {
            for oy in 0..oh {
                let y0 = (oy * self.stride) as isize - pad_h as isize;
                for ox in 0..ow {
                    let x0 = (ox * self.stride) as isize - pad_w as isize;
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for dy in 0..ph as isize {
                            let yy = y0 + dy;
                            if yy < 0 || yy >= h as isize {
                                continue;
                            }
                            for dx in 0..pw as isize {
                                let xx = x0 + dx;
                                if xx < 0 || xx >= w as isize {
                                    continue;
                                }
                                let idx = ((b * h + yy as usize) * w + xx as usize) * c + ch;
                                let v = x.data[idx];
                                if v > best || best_idx == usize::MAX {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        out.push(best);
                        arg.push(best_idx);
                    }
                }
            }
        }
        let shape = if spatial == 2 {
            vec![n, oh, ow, c]
        } else {
            vec![n, oh, c]
        };
        Ok((Tensor::from_vec(&shape, out)?, arg))
    }
}

impl Layer for MaxPool {
    fn kind(&self) -> &'static str {
        "maxpool"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (y, arg) = self.compute(x)?;
        self.cache = Some((x.shape.clone(), arg));
        Ok(y)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.compute(x)?.0)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (shape, arg) = self.cache.as_ref().ok_or_else(|| missing_cache("maxpool"))?;
        if grad.len() != arg.len() {
            return Err(Error::shape("maxpool: upstream gradient shape mismatch"));
        }
        let mut dx = Tensor::zeros(shape);
        for (&idx, g) in arg.iter().zip(&grad.data) {
            dx.data[idx] += g;
        }
        Ok(dx)
    }
}
