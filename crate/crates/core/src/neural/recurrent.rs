//! LSTM and its bidirectional wrapper.

use rand_chacha::ChaCha8Rng;

use super::layers::{glorot, Layer, Mode};
use super::tensor::{gemm, matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Long short-term memory over `(N, T, D)` with gate order `i, f, g, o`.
///
/// `kernel` is `[D, 4H]`, `recurrent` is `[H, 4H]`, `bias` is `[4H]`.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub kernel: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
    pub return_sequences: bool,
    grad_kernel: Tensor,
    grad_recurrent: Tensor,
    grad_bias: Tensor,
    cache: Option<LstmCache>,
}

#[derive(Debug, Clone)]
struct LstmCache {
    x: Tensor,
    /// Post-activation gates, `(N, T, 4H)`.
    gates: Vec<f64>,
    /// Cell states, `(N, T, H)`.
    cells: Vec<f64>,
    /// Hidden states, `(N, T, H)`.
    hidden: Vec<f64>,
}

impl Lstm {
    pub fn new(kernel: Tensor, recurrent: Tensor, bias: Tensor, return_sequences: bool) -> Result<Self> {
        let h4 = kernel.shape.get(1).copied().unwrap_or(0);
        if kernel.rank() != 2 || h4 % 4 != 0 || recurrent.shape != [h4 / 4, h4] || bias.shape != [h4] {
            return Err(Error::shape(format!(
                "lstm weights {:?}, {:?}, {:?} disagree",
                kernel.shape, recurrent.shape, bias.shape
            )));
        }
        Ok(Lstm {
            grad_kernel: Tensor::zeros(&kernel.shape),
            grad_recurrent: Tensor::zeros(&recurrent.shape),
            grad_bias: Tensor::zeros(&bias.shape),
            kernel,
            recurrent,
            bias,
            return_sequences,
            cache: None,
        })
    }

    /// Glorot-initialized weights with the forget-gate bias set to 1.
    pub fn init(rng: &mut ChaCha8Rng, inputs: usize, units: usize, return_sequences: bool) -> Self {
        let kernel = glorot(rng, &[inputs, 4 * units], inputs, 4 * units);
        let recurrent = glorot(rng, &[units, 4 * units], units, 4 * units);
        let mut bias = Tensor::zeros(&[4 * units]);
        bias.data[units..2 * units].fill(1.0);
        Lstm::new(kernel, recurrent, bias, return_sequences).expect("consistent shapes")
    }

    pub fn units(&self) -> usize {
        self.recurrent.shape[0]
    }

    fn run(&self, x: &Tensor) -> Result<LstmCache> {
        x.expect_rank(3, "lstm")?;
        let (n, t, d) = (x.shape[0], x.shape[1], x.shape[2]);
        if d != self.kernel.shape[0] {
            return Err(Error::shape(format!(
                "lstm expects {} input features, got shape {:?}",
                self.kernel.shape[0], x.shape
            )));
        }
        if t == 0 {
            return Err(Error::shape("lstm needs at least one time step"));
        }
        let h = self.units();
        let h4 = 4 * h;
        let mut gates = Vec::with_capacity(n * t * h4);
        for _ in 0..n * t {
            gates.extend_from_slice(&self.bias.data);
        }
        matmul(n * t, d, h4, &x.data, &self.kernel.data, &mut gates, true);
        let mut cells = vec![0.0; n * t * h];
        let mut hidden = vec![0.0; n * t * h];
        for step in 0..t {
            if step > 0 {
                let prev = &hidden[(step - 1) * h..];
                gemm(
                    n,
                    h,
                    h4,
                    prev,
                    (t * h, 1),
                    &self.recurrent.data,
                    (h4, 1),
                    1.0,
                    &mut gates[step * h4..],
                    (t * h4, 1),
                );
            }
            for b in 0..n {
                let row = (b * t + step) * h;
                let z = &mut gates[(b * t + step) * h4..(b * t + step + 1) * h4];
                for u in 0..h {
                    z[u] = sigmoid(z[u]);
                    z[h + u] = sigmoid(z[h + u]);
                    z[2 * h + u] = z[2 * h + u].tanh();
                    z[3 * h + u] = sigmoid(z[3 * h + u]);
                    let c_prev = if step > 0 { cells[row - h + u] } else { 0.0 };
                    let c = z[h + u] * c_prev + z[u] * z[2 * h + u];
                    cells[row + u] = c;
                    hidden[row + u] = z[3 * h + u] * c.tanh();
                }
            }
        }
        Ok(LstmCache {
            x: x.clone(),
            gates,
            cells,
            hidden,
        })
    }

    fn output(&self, cache: &LstmCache) -> Result<Tensor> {
        let (n, t) = (cache.x.shape[0], cache.x.shape[1]);
        let h = self.units();
        if self.return_sequences {
            Tensor::from_vec(&[n, t, h], cache.hidden.clone())
        } else {
            let mut last = Vec::with_capacity(n * h);
            for b in 0..n {
                let at = (b * t + t - 1) * h;
                last.extend_from_slice(&cache.hidden[at..at + h]);
            }
            Tensor::from_vec(&[n, h], last)
        }
    }
}

impl Layer for Lstm {
    fn kind(&self) -> &'static str {
        "lstm"
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor> {
        let cache = self.run(x)?;
        let y = self.output(&cache)?;
        self.cache = Some(cache);
        Ok(y)
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.output(&self.run(x)?)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("lstm: backward called before forward".into()))?;
        let (n, t, d) = (cache.x.shape[0], cache.x.shape[1], cache.x.shape[2]);
        let h = self.units();
        let h4 = 4 * h;
        let expected = if self.return_sequences {
            vec![n, t, h]
        } else {
            vec![n, h]
        };
        if grad.shape != expected {
            return Err(Error::shape("lstm: upstream gradient shape mismatch"));
        }
        let mut dz = vec![0.0; n * t * h4];
        let mut dh_next = vec![0.0; n * h];
        let mut dc_next = vec![0.0; n * h];
        for step in (0..t).rev() {
            for b in 0..n {
                let row = (b * t + step) * h;
                let z = &cache.gates[(b * t + step) * h4..(b * t + step + 1) * h4];
                let dzr = &mut dz[(b * t + step) * h4..(b * t + step + 1) * h4];
                for u in 0..h {
                    let upstream = if self.return_sequences {
                        grad.data[row + u]
                    } else if step == t - 1 {
                        grad.data[b * h + u]
                    } else {
                        0.0
                    };
                    let dh = upstream + dh_next[b * h + u];
                    let (i, f, g, o) = (z[u], z[h + u], z[2 * h + u], z[3 * h + u]);
                    let tc = cache.cells[row + u].tanh();
                    let c_prev = if step > 0 { cache.cells[row - h + u] } else { 0.0 };
                    let dc = dc_next[b * h + u] + dh * o * (1.0 - tc * tc);
                    dzr[u] = dc * g * i * (1.0 - i);
                    dzr[h + u] = dc * c_prev * f * (1.0 - f);
                    dzr[2 * h + u] = dc * i * (1.0 - g * g);
                    dzr[3 * h + u] = dh * tc * o * (1.0 - o);
                    dc_next[b * h + u] = dc * f;
                }
            }
            // dh_{t-1} = dz_t · Uᵀ
            gemm(
                n,
                h4,
                h,
                &dz[step * h4..],
                (t * h4, 1),
                &self.recurrent.data,
                (1, h4),
                0.0,
                &mut dh_next,
                (h, 1),
            );
            if step > 0 {
                // dU += h_{t-1}ᵀ · dz_t
                gemm(
                    h,
                    n,
                    h4,
                    &cache.hidden[(step - 1) * h..],
                    (1, t * h),
                    &dz[step * h4..],
                    (t * h4, 1),
                    1.0,
                    &mut self.grad_recurrent.data,
                    (h4, 1),
                );
            }
        }
        for row in dz.chunks_exact(h4) {
            for (gb, v) in self.grad_bias.data.iter_mut().zip(row) {
                *gb += v;
            }
        }
        matmul_tn(d, n * t, h4, &cache.x.data, &dz, &mut self.grad_kernel.data, true);
        let mut dx = vec![0.0; n * t * d];
        matmul_nt(n * t, h4, d, &dz, &self.kernel.data, &mut dx, false);
        Tensor::from_vec(&cache.x.shape, dx)
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.kernel, &self.recurrent, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.kernel, &mut self.recurrent, &mut self.bias]
    }

    fn grads(&self) -> Vec<&Tensor> {
        vec![&self.grad_kernel, &self.grad_recurrent, &self.grad_bias]
    }

    fn param_grads(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        vec![
            (&mut self.kernel, &self.grad_kernel),
            (&mut self.recurrent, &self.grad_recurrent),
            (&mut self.bias, &self.grad_bias),
        ]
    }

    fn zero_grad(&mut self) {
        self.grad_kernel.fill(0.0);
        self.grad_recurrent.fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// Reverses the time axis of an `(N, T, C)` tensor.
fn reverse_time(x: &Tensor) -> Tensor {
    let (n, t, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let mut data = Vec::with_capacity(x.len());
    for b in 0..n {
        for s in (0..t).rev() {
            let at = (b * t + s) * c;
            data.extend_from_slice(&x.data[at..at + c]);
        }
    }
    Tensor {
        shape: x.shape.clone(),
        data,
    }
}

/// Concatenates the trailing axes of two equally shaped tensors.
fn concat_last(a: &Tensor, b: &Tensor) -> Tensor {
    let (ca, cb) = (a.last_dim(), b.last_dim());
    let rows = a.len() / ca;
    let mut data = Vec::with_capacity(a.len() + b.len());
    for r in 0..rows {
        data.extend_from_slice(&a.data[r * ca..(r + 1) * ca]);
        data.extend_from_slice(&b.data[r * cb..(r + 1) * cb]);
    }
    let mut shape = a.shape.clone();
    *shape.last_mut().unwrap() = ca + cb;
    Tensor { shape, data }
}

fn split_last(x: &Tensor, left: usize) -> (Tensor, Tensor) {
    let c = x.last_dim();
    let rows = x.len() / c;
    let mut a = Vec::with_capacity(rows * left);
    let mut b = Vec::with_capacity(rows * (c - left));
    for r in 0..rows {
        a.extend_from_slice(&x.data[r * c..r * c + left]);
        b.extend_from_slice(&x.data[r * c + left..(r + 1) * c]);
    }
    let mut sa = x.shape.clone();
    *sa.last_mut().unwrap() = left;
    let mut sb = x.shape.clone();
    *sb.last_mut().unwrap() = c - left;
    (Tensor { shape: sa, data: a }, Tensor { shape: sb, data: b })
}

/// Two independent LSTMs, one reading the sequence backwards; outputs are
/// concatenated to width `2H`. With sequences returned, the backward half is
/// re-aligned to forward time.
#[derive(Debug, Clone)]
pub struct Bidirectional {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl Bidirectional {
    pub fn new(forward: Lstm, backward: Lstm) -> Result<Self> {
        if forward.kernel.shape != backward.kernel.shape || forward.return_sequences != backward.return_sequences {
            return Err(Error::shape("bidirectional halves must have matching shapes"));
        }
        Ok(Bidirectional { forward, backward })
    }

    pub fn init(rng: &mut ChaCha8Rng, inputs: usize, units: usize, return_sequences: bool) -> Self {
        let f = Lstm::init(rng, inputs, units, return_sequences);
        let b = Lstm::init(rng, inputs, units, return_sequences);
        Bidirectional {
            forward: f,
            backward: b,
        }
    }

    fn combine(&self, yf: Tensor, yb: Tensor) -> Tensor {
        if self.forward.return_sequences {
            concat_last(&yf, &reverse_time(&yb))
        } else {
            concat_last(&yf, &yb)
        }
    }
}

impl Layer for Bidirectional {
    fn kind(&self) -> &'static str {
        "bidirectional"
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        x.expect_rank(3, "bidirectional lstm")?;
        let yf = self.forward.forward(x, mode)?;
        let yb = self.backward.forward(&reverse_time(x), mode)?;
        Ok(self.combine(yf, yb))
    }

    fn infer(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(3, "bidirectional lstm")?;
        let yf = self.forward.infer(x)?;
        let yb = self.backward.infer(&reverse_time(x))?;
        Ok(self.combine(yf, yb))
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let h = self.forward.units();
        if grad.last_dim() != 2 * h {
            return Err(Error::shape("bidirectional: upstream gradient shape mismatch"));
        }
        let (gf, gb) = split_last(grad, h);
        let gb = if self.forward.return_sequences {
            reverse_time(&gb)
        } else {
            gb
        };
        let mut dx = self.forward.backward(&gf)?;
        let dxb = reverse_time(&self.backward.backward(&gb)?);
        for (a, b) in dx.data.iter_mut().zip(&dxb.data) {
            *a += b;
        }
        Ok(dx)
    }

    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.forward.params();
        p.extend(self.backward.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.forward.params_mut();
        p.extend(self.backward.params_mut());
        p
    }

    fn grads(&self) -> Vec<&Tensor> {
        let mut g = self.forward.grads();
        g.extend(self.backward.grads());
        g
    }

    fn param_grads(&mut self) -> Vec<(&mut Tensor, &Tensor)> {
        let mut p = self.forward.param_grads();
        p.extend(self.backward.param_grads());
        p
    }

    fn zero_grad(&mut self) {
        self.forward.zero_grad();
        self.backward.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_give_zero_output() {
        let lstm = Lstm::new(
            Tensor::zeros(&[3, 8]),
            Tensor::zeros(&[2, 8]),
            Tensor::zeros(&[8]),
            false,
        )
        .unwrap();
        let x = Tensor::filled(&[2, 4, 3], 0.7);
        let y = lstm.infer(&x).unwrap();
        assert_eq!(y.shape, vec![2, 2]);
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lstm = Lstm::init(&mut rng, 3, 4, true);
        let x = Tensor::from_vec(&[1, 6, 3], (0..18).map(|i| (i as f64) * 3.0 - 20.0).collect()).unwrap();
        let y = lstm.infer(&x).unwrap();
        assert_eq!(y.shape, vec![1, 6, 4]);
        assert!(y.data.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lstm = Lstm::init(&mut rng, 2, 3, false);
        assert_eq!(&lstm.bias.data[3..6], &[1.0, 1.0, 1.0]);
        assert_eq!(&lstm.bias.data[0..3], &[0.0; 3]);
    }

    #[test]
    fn bidirectional_width_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fwd = Lstm::init(&mut rng, 1, 2, false);
        let bi = Bidirectional::new(fwd.clone(), fwd.clone()).unwrap();
        let x = Tensor::from_vec(&[1, 3, 1], vec![0.1, 0.5, 0.9]).unwrap();
        let y = bi.infer(&x).unwrap();
        assert_eq!(y.shape, vec![1, 4]);
        // a palindrome reads identically in both directions
        let p = Tensor::from_vec(&[1, 3, 1], vec![0.2, 0.8, 0.2]).unwrap();
        let yp = bi.infer(&p).unwrap();
        assert!((yp.data[0] - yp.data[2]).abs() < 1e-15);
        assert!((yp.data[1] - yp.data[3]).abs() < 1e-15);
    }
}
