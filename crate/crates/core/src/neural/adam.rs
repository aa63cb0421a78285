use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update of `param` at step `t` (1-based).
pub fn adam_step(param: &mut Tensor, grad: &Tensor, state: &mut Moments, lr: f64, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::domain("adam step count starts at 1"));
    }
    if param.shape != grad.shape || state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::shape(format!(
            "adam: parameter {:?} and gradient {:?} disagree",
            param.shape, grad.shape
        )));
    }
    let c1 = 1.0 - BETA1.powi(t as i32);
    let c2 = 1.0 - BETA2.powi(t as i32);
    for (((p, &g), m), v) in param
        .data
        .iter_mut()
        .zip(&grad.data)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
    Ok(())
}

/// Adam over an ordered list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub step: u64,
    pub moments: Vec<Moments>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn update(&mut self, pairs: Vec<(&mut Tensor, &Tensor)>) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = pairs.iter().map(|(p, _)| Moments::zeros(p.len())).collect();
        }
        if self.moments.len() != pairs.len() {
            return Err(Error::shape("adam: parameter list changed between steps"));
        }
        self.step += 1;
        for ((p, g), state) in pairs.into_iter().zip(self.moments.iter_mut()) {
            adam_step(p, g, state, self.learning_rate, self.step)?;
        }
        Ok(())
    }
}
