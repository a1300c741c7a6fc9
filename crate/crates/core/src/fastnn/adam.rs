use super::model::{FastNnModel, Gradients};
use crate::error::{FiddleError, Result};

/// Adam moment buffers for one model, laid out like [`FastNnModel::param_slices`].
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(model: &FastNnModel) -> Self {
        let shapes: Vec<usize> = model.param_slices().iter().map(|s| s.len()).collect();
        Self {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            steps: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One bias-corrected Adam update of `model` along `grads`.
    pub fn step(&mut self, model: &mut FastNnModel, grads: &Gradients, lr: f64) -> Result<()> {
        let g = grads.slices();
        let mut params = model.param_slices_mut();
        if g.len() != params.len()
            || g.iter().zip(&params).any(|(a, b)| a.len() != b.len())
            || self.first.len() != params.len()
        {
            return Err(FiddleError::Shape("gradient layout does not match the model".into()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (k, param) in params.iter_mut().enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for (((w, &gi), mi), vi) in param.iter_mut().zip(g[k]).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
