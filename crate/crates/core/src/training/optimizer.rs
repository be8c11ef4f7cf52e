use crate::encoder::{to_f32_grid, EmbeddingModel, Parameters};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Coefficient of the `lambda * theta` term added to every gradient.
    pub weight_decay: f64,
}

/// First and second moment estimates per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    names: Vec<String>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    pub fn new(model: &EmbeddingModel) -> Self {
        let mut names = Vec::new();
        let mut m = Vec::new();
        for (name, t) in model.named_tensors() {
            if model.is_trainable(&name) {
                names.push(name);
                m.push(vec![0.0; t.len()]);
            }
        }
        let v = m.clone();
        Self { names, m, v, step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every trainable tensor. Frozen
    /// tensors are untouched. Parameters stay on the single-precision grid.
    pub fn step(&mut self, model: &mut EmbeddingModel, grads: &EmbeddingModel, config: &AdamConfig) -> Result<()> {
        let grad_tensors: Vec<(String, Vec<f64>)> = grads
            .named_tensors()
            .into_iter()
            .filter(|(n, _)| model.is_trainable(n))
            .map(|(n, t)| (n, t.data().to_vec()))
            .collect();
        if grad_tensors.len() != self.names.len() || grad_tensors.iter().zip(&self.names).any(|(g, n)| &g.0 != n) {
            return Err(Error::Architecture("gradient tensors do not match the optimizer state".into()));
        }
        if let Some((name, _)) = grad_tensors.iter().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let mut slot = 0;
        for (name, param) in model.named_tensors_mut() {
            if self.names.get(slot) != Some(&name) {
                continue;
            }
            let g = &grad_tensors[slot].1;
            let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
            for (i, p) in param.data_mut().iter_mut().enumerate() {
                let gi = g[i] + config.weight_decay * *p;
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                let update = config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + EPSILON);
                *p = to_f32_grid(*p - update);
            }
            slot += 1;
        }
        Ok(())
    }
}
