//! Logistic head over sparse features and the Adam optimizer.

use serde::{Deserialize, Serialize};

use super::encoder::SparseVector;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of logit `z` against `y`, computed as
/// softplus(z) - y·z to stay finite for large |z|.
pub fn bce_with_logit(z: f64, y: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if y {
        softplus - z
    } else {
        softplus
    }
}

/// Weights for `dim` features followed by the bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    params: Vec<f64>,
}

impl LogisticHead {
    pub fn zeros(dim: usize) -> Self {
        LogisticHead {
            params: vec![0.0; dim + 1],
        }
    }

    pub fn from_parts(mut weights: Vec<f64>, bias: f64) -> Self {
        weights.push(bias);
        LogisticHead { params: weights }
    }

    pub fn dim(&self) -> usize {
        self.params.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.dim()]
    }

    pub fn bias(&self) -> f64 {
        self.params[self.dim()]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn logit(&self, x: &SparseVector) -> f64 {
        x.dot(&self.params) + self.bias()
    }

    pub fn probability(&self, x: &SparseVector) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Mean BCE over `batch`.
    pub fn loss(&self, batch: &[(&SparseVector, bool)]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch
            .iter()
            .map(|(x, y)| bce_with_logit(self.logit(x), *y))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Mean BCE over `batch`; writes its gradient into `grad` (length
    /// `dim + 1`, overwritten) and returns the loss.
    pub fn loss_and_gradient(&self, batch: &[(&SparseVector, bool)], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        if batch.is_empty() {
            return 0.0;
        }
        let scale = 1.0 / batch.len() as f64;
        let bias_slot = self.dim();
        let mut loss = 0.0;
        for (x, y) in batch {
            let z = self.logit(x);
            loss += bce_with_logit(z, *y);
            let residual = (sigmoid(z) - if *y { 1.0 } else { 0.0 }) * scale;
            for (i, v) in x.iter() {
                grad[i] += residual * v;
            }
            grad[bias_slot] += residual;
        }
        loss * scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let step = self.learning_rate / c1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / ((*v / c2).sqrt() + eps);
        }
    }
}
