//! Stride-1 convolutions in channels-last layout.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{glorot, Activation, Layer, Mode};
use super::tensor::{gemm, matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

/// Temporal convolution, `(N, T, C) -> (N, T - K + 1, F)`, weight `[K, C, F]`.
///
/// Each output step reads a contiguous `K·C` slice of the input, so the
/// forward pass is a single GEMM per sample over an overlapping view.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    grad_weight: Tensor,
    grad_bias: Tensor,
    cache: Option<(Tensor, Tensor)>,
}

impl Conv1d {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.rank() != 3 || bias.shape != [weight.shape[2]] {
            return Err(Error::shape(format!(
                "conv1d weight {:?} and bias {:?} disagree",
                weight.shape, bias.shape
            )));
        }
        Ok(Conv1d {
            grad_weight: Tensor::zeros(&weight.shape),
            grad_bias: Tensor::zeros(&bias.shape),
            weight,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn init(rng: &mut ChaCha8Rng, channels: usize, filters: usize, kernel: usize, activation: Activation) -> Self {
        let w = glorot(rng, &[kernel, channels, filters], kernel * channels, kernel * filters);
        Conv1d::new(w, Tensor::zeros(&[filters]), activation).expect("consistent shapes")
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.weight.shape[0], self.weight.shape[1], self.weight.shape[2])
    }

    fn compute(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(3, "conv1d")?;
        let (k, c, f) = self.dims();
        let (n, t) = (x.shape[0], x.shape[1]);
        if x.shape[2] != c || t < k {
            return Err(Error::shape(format!(
                "conv1d kernel {k}x{c} cannot slide over input {:?}",
                x.shape
            )));
        }
        let to = t - k + 1;
        let mut out = Vec::with_capacity(n * to * f);
        for _ in 0..n * to {
            out.extend_from_slice(&self.bias.data);
        }
        for b in 0..n {
            let xs = &x.data[b * t * c..(b + 1) * t * c];
            let os = &mut out[b * to * f..(b + 1) * to * f];
            gemm(to, k * c, f, xs, (c, 1), &self.weight.data, (f, 1), 1.0, os, (f, 1));
        }
        self.activation.apply(&mut out);
        Tensor::from_vec(&[n, to, f], out)
    }
}

impl Layer for Conv1d {
    fn kind(&self) -> &'static str {
        "conv1d"
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
        let (x, y) = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv1d: backward called before forward".into()))?;
        if grad.shape != y.shape {
            return Err(Error::shape("conv1d: upstream gradient shape mismatch"));
        }
        let (k, c, f) = self.dims();
        let (n, t) = (x.shape[0], x.shape[1]);
        let to = t - k + 1;
        let mut g = grad.data.clone();
        self.activation.backprop(&y.data, &mut g);
        for row in g.chunks_exact(f) {
            for (gb, v) in self.grad_bias.data.iter_mut().zip(row) {
                *gb += v;
            }
        }
        let mut dx = vec![0.0; x.len()];
        let mut patch_grad = vec![0.0; to * k * c];
        for b in 0..n {
            let xs = &x.data[b * t * c..(b + 1) * t * c];
            let gs = &g[b * to * f..(b + 1) * to * f];
            // dW (KC×F) += patchesᵀ (KC×To) · G (To×F)
            gemm(
                k * c,
                to,
                f,
                xs,
                (1, c),
                gs,
                (f, 1),
                1.0,
                &mut self.grad_weight.data,
                (f, 1),
            );
            matmul_nt(to, f, k * c, gs, &self.weight.data, &mut patch_grad, false);
            let dxs = &mut dx[b * t * c..(b + 1) * t * c];
            for (step, pg) in patch_grad.chunks_exact(k * c).enumerate() {
                for (d, v) in dxs[step * c..step * c + k * c].iter_mut().zip(pg) {
                    *d += v;
                }
            }
        }
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

/// Planar convolution, `(N, H, W, C) -> (N, H', W', F)`, weight `[KH, KW, C, F]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub padding: Padding,
    grad_weight: Tensor,
    grad_bias: Tensor,
    cache: Option<Conv2dCache>,
}

#[derive(Debug, Clone)]
struct Conv2dCache {
    input_shape: Vec<usize>,
    cols: Vec<f64>,
    out: Tensor,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    h: usize,
    w: usize,
    c: usize,
    oh: usize,
    ow: usize,
    pad_h: usize,
    pad_w: usize,
    kh: usize,
    kw: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.kh * self.kw * self.c
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation, padding: Padding) -> Result<Self> {
        if weight.rank() != 4 || bias.shape != [weight.shape[3]] {
            return Err(Error::shape(format!(
                "conv2d weight {:?} and bias {:?} disagree",
                weight.shape, bias.shape
            )));
        }
        Ok(Conv2d {
            grad_weight: Tensor::zeros(&weight.shape),
            grad_bias: Tensor::zeros(&bias.shape),
            weight,
            bias,
            activation,
            padding,
            cache: None,
        })
    }

    pub fn init(
        rng: &mut ChaCha8Rng,
        channels: usize,
        filters: usize,
        kernel: (usize, usize),
        activation: Activation,
        padding: Padding,
    ) -> Self {
        let (kh, kw) = kernel;
        let w = glorot(rng, &[kh, kw, channels, filters], kh * kw * channels, kh * kw * filters);
        Conv2d::new(w, Tensor::zeros(&[filters]), activation, padding).expect("consistent shapes")
    }

    fn geometry(&self, x: &Tensor) -> Result<Geometry> {
        x.expect_rank(4, "conv2d")?;
        let (kh, kw, c) = (self.weight.shape[0], self.weight.shape[1], self.weight.shape[2]);
        let (h, w) = (x.shape[1], x.shape[2]);
        if x.shape[3] != c {
            return Err(Error::shape(format!(
                "conv2d expects {c} input channels, got shape {:?}",
                x.shape
            )));
        }
        let g = match self.padding {
            Padding::Same => Geometry {
                h,
                w,
                c,
                oh: h,
                ow: w,
                pad_h: (kh - 1) / 2,
                pad_w: (kw - 1) / 2,
                kh,
                kw,
            },
            Padding::Valid => {
                if h < kh || w < kw {
                    return Err(Error::shape(format!(
                        "conv2d kernel {kh}x{kw} does not fit input {:?} with valid padding",
                        x.shape
                    )));
                }
                Geometry {
                    h,
                    w,
                    c,
                    oh: h - kh + 1,
                    ow: w - kw + 1,
                    pad_h: 0,
                    pad_w: 0,
                    kh,
                    kw,
                }
            }
        };
        Ok(g)
    }

    /// Patch matrix for one sample, `positions × patch`, zero outside the input.
    fn im2col(g: &Geometry, xs: &[f64], cols: &mut [f64]) {
        let patch = g.patch();
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = &mut cols[(oy * g.ow + ox) * patch..(oy * g.ow + ox + 1) * patch];
                for dy in 0..g.kh {
                    let yy = (oy + dy) as isize - g.pad_h as isize;
                    for dx in 0..g.kw {
                        let xx = (ox + dx) as isize - g.pad_w as isize;
                        let dst = &mut row[(dy * g.kw + dx) * g.c..(dy * g.kw + dx + 1) * g.c];
                        if yy < 0 || yy >= g.h as isize || xx < 0 || xx >= g.w as isize {
                            dst.fill(0.0);
                        } else {
                            let src = (yy as usize * g.w + xx as usize) * g.c;
                            dst.copy_from_slice(&xs[src..src + g.c]);
                        }
                    }
                }
            }
        }
    }

    fn col2im(g: &Geometry, cols: &[f64], dxs: &mut [f64]) {
        let patch = g.patch();
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                let row = &cols[(oy * g.ow + ox) * patch..(oy * g.ow + ox + 1) * patch];
                for dy in 0..g.kh {
                    let yy = (oy + dy) as isize - g.pad_h as isize;
                    if yy < 0 || yy >= g.h as isize {
                        continue;
                    }
                    for dx in 0..g.kw {
                        let xx = (ox + dx) as isize - g.pad_w as isize;
                        if xx < 0 || xx >= g.w as isize {
                            continue;
                        }
                        let src = &row[(dy * g.kw + dx) * g.c..(dy * g.kw + dx + 1) * g.c];
                        let at = (yy as usize * g.w + xx as usize) * g.c;
                        for (d, v) in dxs[at..at + g.c].iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }

    fn compute(&self, x: &Tensor, keep_cols: bool) -> Result<(Tensor, Vec<f64>)> {
        let g = self.geometry(x)?;
        let n = x.shape[0];
        let f = self.weight.shape[3];
        let (patch, pos) = (g.patch(), g.positions());
        let in_len = g.h * g.w * g.c;
        let mut out = Vec::with_capacity(n * pos * f);
        for _ in 0..n * pos {
            out.extend_from_slice(&self.bias.data);
        }
        let mut all_cols = if keep_cols {
            vec![0.0; n * pos * patch]
        } else {
            Vec::new()
        };
        let mut scratch = if keep_cols { Vec::new() } else { vec![0.0; pos * patch] };
        for b in 0..n {
            let cols: &mut [f64] = if keep_cols {
                &mut all_cols[b * pos * patch..(b + 1) * pos * patch]
            } else {
                &mut scratch
            };
            Self::im2col(&g, &x.data[b * in_len..(b + 1) * in_len], cols);
            matmul(
                pos,
                patch,
                f,
                cols,
                &self.weight.data,
                &mut out[b * pos * f..(b + 1) * pos * f],
                true,
            );
        }
        self.activation.apply(&mut out);
        Ok((Tensor::from_vec(&[n, g.oh, g.ow, f], out)?, all_cols))
    }
}

impl Layer for Conv2d {
    fn kind(&self) -> &'static str {
        "conv2d"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let (y, cols) = self.compute(x, true)?;
        self.cache = Some(Conv2dCache {
            input_shape: x.shape.clone(),
            cols,
            out: y.clone(),
        });
        Ok(y)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.compute(x, false)?.0)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("conv2d: backward called before forward".into()))?;
        if grad.shape != cache.out.shape {
            return Err(Error::shape("conv2d: upstream gradient shape mismatch"));
        }
        let probe = Tensor {
            shape: cache.input_shape.clone(),
            data: Vec::new(),
        };
        let g = self.geometry(&probe)?;
        let n = cache.input_shape[0];
        let f = self.weight.shape[3];
        let (patch, pos) = (g.patch(), g.positions());
        let in_len = g.h * g.w * g.c;
        let mut gr = grad.data.clone();
        self.activation.backprop(&cache.out.data, &mut gr);
        for row in gr.chunks_exact(f) {
            for (gb, v) in self.grad_bias.data.iter_mut().zip(row) {
                *gb += v;
            }
        }
        let mut dx = vec![0.0; n * in_len];
        let mut dcols = vec![0.0; pos * patch];
        for b in 0..n {
            let cols = &cache.cols[b * pos * patch..(b + 1) * pos * patch];
            let gs = &gr[b * pos * f..(b + 1) * pos * f];
            matmul_tn(patch, pos, f, cols, gs, &mut self.grad_weight.data, true);
            matmul_nt(pos, f, patch, gs, &self.weight.data, &mut dcols, false);
            Self::col2im(&g, &dcols, &mut dx[b * in_len..(b + 1) * in_len]);
        }
        Tensor::from_vec(&cache.input_shape, dx)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv1d_examples() {
        let w = Tensor::from_vec(&[2, 1, 1], vec![1.0, 1.0]).unwrap();
        let conv = Conv1d::new(w, Tensor::zeros(&[1]), Activation::Linear).unwrap();
        let x = Tensor::from_vec(&[1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(conv.infer(&x).unwrap().data, vec![3.0, 5.0, 7.0]);
        let w = Tensor::from_vec(&[1, 1, 1], vec![2.0]).unwrap();
        let conv = Conv1d::new(w, Tensor::filled(&[1], 1.0), Activation::Linear).unwrap();
        let x = Tensor::from_vec(&[1, 3, 1], vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(conv.infer(&x).unwrap().data, vec![1.0, 3.0, 5.0]);
        let w = Tensor::zeros(&[5, 1, 1]);
        let conv = Conv1d::new(w, Tensor::zeros(&[1]), Activation::Linear).unwrap();
        assert!(matches!(conv.infer(&Tensor::zeros(&[1, 4, 1])), Err(Error::Shape(_))));
    }

    fn naive_conv2d(x: &Tensor, w: &Tensor, pad: (usize, usize), out: (usize, usize)) -> Vec<f64> {
        let (h, wd, c) = (x.shape[1], x.shape[2], x.shape[3]);
        let (kh, kw, f) = (w.shape[0], w.shape[1], w.shape[3]);
        let mut y = vec![0.0; out.0 * out.1 * f];
        for oy in 0..out.0 {
            for ox in 0..out.1 {
                for fo in 0..f {
                    let mut s = 0.0;
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let yy = (oy + dy) as isize - pad.0 as isize;
                            let xx = (ox + dx) as isize - pad.1 as isize;
                            if yy < 0 || xx < 0 || yy >= h as isize || xx >= wd as isize {
                                continue;
                            }
                            for ci in 0..c {
                                s += x.data[(yy as usize * wd + xx as usize) * c + ci]
                                    * w.data[((dy * kw + dx) * c + ci) * f + fo];
                            }
                        }
                    }
                    y[(oy * out.1 + ox) * f + fo] = s;
                }
            }
        }
        y
    }

    #[test]
    fn conv2d_matches_naive_loops() {
        let x = Tensor::from_vec(&[1, 5, 4, 2], (0..40).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let w = Tensor::from_vec(&[3, 2, 2, 3], (0..36).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
        let valid = Conv2d::new(w.clone(), Tensor::zeros(&[3]), Activation::Linear, Padding::Valid).unwrap();
        let got = valid.infer(&x).unwrap();
        assert_eq!(got.shape, vec![1, 3, 3, 3]);
        for (a, b) in got.data.iter().zip(naive_conv2d(&x, &w, (0, 0), (3, 3))) {
            assert!((a - b).abs() < 1e-12);
        }
        let same = Conv2d::new(w.clone(), Tensor::zeros(&[3]), Activation::Linear, Padding::Same).unwrap();
        let got = same.infer(&x).unwrap();
        assert_eq!(got.shape, vec![1, 5, 4, 3]);
        for (a, b) in got.data.iter().zip(naive_conv2d(&x, &w, (1, 0), (5, 4))) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv2d_valid_rejects_small_input() {
        let conv = Conv2d::new(
            Tensor::zeros(&[8, 8, 1, 2]),
            Tensor::zeros(&[2]),
            Activation::Linear,
            Padding::Valid,
        )
        .unwrap();
        assert!(conv.infer(&Tensor::zeros(&[1, 30, 7, 1])).is_err());
    }
}
