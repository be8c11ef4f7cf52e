use rand::Rng;

use super::gru::{BiGru, BiGruTrace};
use super::tensor::{join, Parameters, Tensor};

/// Stacked bidirectional GRU layers with inverted dropout between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentStack {
    layers: Vec<BiGru>,
    dropout: f64,
}

#[derive(Debug, Clone)]
pub struct StackTrace {
    steps: usize,
    inputs: Vec<Vec<f64>>,
    traces: Vec<BiGruTrace>,
    /// Scaled keep-masks applied to the output of layer `l` before layer `l + 1`.
    masks: Vec<Option<Vec<f64>>>,
}

impl StackTrace {
    /// Final-layer states, `[T, 2h]`.
    pub fn states(&self) -> &[f64] {
        &self.traces.last().expect("stack has layers").output
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl RecurrentStack {
    pub fn zeros(input_dim: usize, hidden: usize, num_layers: usize, dropout: f64) -> Self {
        let layers = (0..num_layers)
            .map(|l| BiGru::zeros(if l == 0 { input_dim } else { 2 * hidden }, hidden))
            .collect();
        Self { layers, dropout }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, num_layers: usize, dropout: f64, rng: &mut R) -> Self {
        let layers = (0..num_layers)
            .map(|l| BiGru::init(if l == 0 { input_dim } else { 2 * hidden }, hidden, rng))
            .collect();
        Self { layers, dropout }
    }

    /// Appends freshly initialized layers on top.
    pub fn extend<R: Rng + ?Sized>(&mut self, added: usize, rng: &mut R) {
        let h = self.hidden();
        for _ in 0..added {
            self.layers.push(BiGru::init(2 * h, h, rng));
        }
    }

    pub fn layers(&self) -> &[BiGru] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn set_dropout(&mut self, rate: f64) {
        self.dropout = rate;
    }

    /// Runs all layers over `x` (`[steps, input_dim]`). Dropout is active only
    /// when an rng is supplied and the rate is positive.
    pub fn forward<R: Rng + ?Sized>(&self, x: &[f64], steps: usize, mut dropout_rng: Option<&mut R>) -> StackTrace {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut traces: Vec<BiGruTrace> = Vec::with_capacity(n);
        let mut masks = Vec::with_capacity(n.saturating_sub(1));
        let mut current = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let trace = layer.forward(&current, steps);
            inputs.push(current);
            if l + 1 < n {
                let mut next = trace.output.clone();
                let mask = match dropout_rng.as_deref_mut() {
                    Some(rng) if self.dropout > 0.0 => {
                        let keep = 1.0 - self.dropout;
                        let mask: Vec<f64> = (0..next.len())
                            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        for (v, m) in next.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                        Some(mask)
                    }
                    _ => None,
                };
                masks.push(mask);
                current = next;
            } else {
                current = Vec::new();
            }
            traces.push(trace);
        }
        StackTrace {
            steps,
            inputs,
            traces,
            masks,
        }
    }

    /// Backpropagates `d_states` into the layers at index `>= frozen_prefix`.
    pub fn backward(&self, trace: &StackTrace, d_states: &[f64], grad: &mut RecurrentStack, frozen_prefix: usize) {
        let mut d = d_states.to_vec();
        for l in (frozen_prefix..self.layers.len()).rev() {
            let want_dx = l > frozen_prefix;
            let dx = self.layers[l].backward(&trace.inputs[l], &trace.traces[l], &d, &mut grad.layers[l], want_dx);
            if let Some(mut dx) = dx {
                if let Some(mask) = &trace.masks[l - 1] {
                    for (g, m) in dx.iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                d = dx;
            }
        }
    }
}

impl Parameters for RecurrentStack {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.tensors(&join(prefix, &format!("layer{l}")), out);
        }
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.tensors_mut(&join(prefix, &format!("layer{l}")), out);
        }
    }
}
