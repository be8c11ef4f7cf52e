//! Gated recurrent units with hand-written reverse-mode gradients.
//!
//! Per step, with gate rows ordered update (z), reset (r), candidate (n):
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! n  = tanh(W_n x + U_n (r * h) + b_n)
//! h' = (1 - z) * n + z * h
//! ```
//!
//! Every direction starts from a zero state.

use rand::Rng;

use super::tensor::{join, Parameters, Tensor};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    input_dim: usize,
    hidden: usize,
    /// `[3h, input_dim]`
    w: Tensor,
    /// `[3h, h]`
    u: Tensor,
    /// `[3h]`
    b: Tensor,
}

/// Activations kept from a forward pass, indexed by time (not processing
/// order).
#[derive(Debug, Clone)]
pub struct GruTrace {
    steps: usize,
    reverse: bool,
    /// Output state at each time, `[T, h]`.
    pub states: Vec<f64>,
    prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
}

impl GruCell {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w: Tensor::zeros(&[3 * hidden, input_dim]),
            u: Tensor::zeros(&[3 * hidden, hidden]),
            b: Tensor::zeros(&[3 * hidden]),
        }
    }

    /// Uniform initialization in `[-1/sqrt(h), 1/sqrt(h)]`.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            input_dim,
            hidden,
            w: Tensor::uniform(&[3 * hidden, input_dim], bound, rng),
            u: Tensor::uniform(&[3 * hidden, hidden], bound, rng),
            b: Tensor::uniform(&[3 * hidden], bound, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn forward(&self, xs: &[f64], steps: usize, reverse: bool) -> GruTrace {
        let h = self.hidden;
        let d = self.input_dim;
        debug_assert_eq!(xs.len(), steps * d);
        let (w, u, b) = (self.w.data(), self.u.data(), self.b.data());
        let mut tr = GruTrace {
            steps,
            reverse,
            states: vec![0.0; steps * h],
            prev: vec![0.0; steps * h],
            z: vec![0.0; steps * h],
            r: vec![0.0; steps * h],
            n: vec![0.0; steps * h],
        };
        let mut hp = vec![0.0; h];
        let mut gx = vec![0.0; 3 * h];
        let mut rh = vec![0.0; h];
        for step in 0..steps {
            let t = if reverse { steps - 1 - step } else { step };
            let x = &xs[t * d..(t + 1) * d];
            for (j, g) in gx.iter_mut().enumerate() {
                *g = b[j] + dot(&w[j * d..(j + 1) * d], x);
            }
            let row = t * h..(t + 1) * h;
            let (z, r, n) = (&mut tr.z[row.clone()], &mut tr.r[row.clone()], &mut tr.n[row.clone()]);
            for j in 0..h {
                z[j] = sigmoid(gx[j] + dot(&u[j * h..(j + 1) * h], &hp));
                r[j] = sigmoid(gx[h + j] + dot(&u[(h + j) * h..(h + j + 1) * h], &hp));
                rh[j] = r[j] * hp[j];
            }
            for j in 0..h {
                n[j] = (gx[2 * h + j] + dot(&u[(2 * h + j) * h..(2 * h + j + 1) * h], &rh)).tanh();
            }
            tr.prev[row.clone()].copy_from_slice(&hp);
            for j in 0..h {
                hp[j] = (1.0 - z[j]) * n[j] + z[j] * hp[j];
            }
            tr.states[row].copy_from_slice(&hp);
        }
        tr
    }

    /// Accumulates parameter gradients into `grad` and, when given, input
    /// gradients into `dx` (`[T, input_dim]`).
    pub fn backward(&self, xs: &[f64], tr: &GruTrace, d_states: &[f64], grad: &mut GruCell, mut dx: Option<&mut [f64]>) {
        let h = self.hidden;
        let d = self.input_dim;
        let steps = tr.steps;
        let (w, u) = (self.w.data(), self.u.data());
        let mut dh_next = vec![0.0; h];
        let mut da = vec![0.0; 3 * h];
        let mut d_rh = vec![0.0; h];
        let mut rh = vec![0.0; h];
        for step in (0..steps).rev() {
            let t = if tr.reverse { steps - 1 - step } else { step };
            let row = t * h..(t + 1) * h;
            let (z, r, n, hp) = (&tr.z[row.clone()], &tr.r[row.clone()], &tr.n[row.clone()], &tr.prev[row.clone()]);
            let x = &xs[t * d..(t + 1) * d];
            let mut dhp = vec![0.0; h];
            for j in 0..h {
                let dh = d_states[t * h + j] + dh_next[j];
                let dn = dh * (1.0 - z[j]);
                let dz = dh * (hp[j] - n[j]);
                dhp[j] = dh * z[j];
                da[j] = dz * z[j] * (1.0 - z[j]);
                da[2 * h + j] = dn * (1.0 - n[j] * n[j]);
                rh[j] = r[j] * hp[j];
            }
            // candidate path through r * h
            d_rh.fill(0.0);
            {
                let gu = grad.u.data_mut();
                for j in 0..h {
                    let a = da[2 * h + j];
                    if a == 0.0 {
                        continue;
                    }
                    let urow = &u[(2 * h + j) * h..(2 * h + j + 1) * h];
                    let grow = &mut gu[(2 * h + j) * h..(2 * h + j + 1) * h];
                    for k in 0..h {
                        grow[k] += a * rh[k];
                        d_rh[k] += urow[k] * a;
                    }
                }
            }
            for j in 0..h {
                let dr = d_rh[j] * hp[j];
                dhp[j] += d_rh[j] * r[j];
                da[h + j] = dr * r[j] * (1.0 - r[j]);
            }
            // update and reset gates through h
            {
                let gu = grad.u.data_mut();
                for j in 0..2 * h {
                    let a = da[j];
                    if a == 0.0 {
                        continue;
                    }
                    let urow = &u[j * h..(j + 1) * h];
                    let grow = &mut gu[j * h..(j + 1) * h];
                    for k in 0..h {
                        grow[k] += a * hp[k];
                        dhp[k] += urow[k] * a;
                    }
                }
            }
            // input projections and biases
            {
                let gb = grad.b.data_mut();
                let gw = grad.w.data_mut();
                for j in 0..3 * h {
                    let a = da[j];
                    gb[j] += a;
                    if a == 0.0 {
                        continue;
                    }
                    let grow = &mut gw[j * d..(j + 1) * d];
                    for i in 0..d {
                        grow[i] += a * x[i];
                    }
                }
                if let Some(dx) = dx.as_deref_mut() {
                    let dxt = &mut dx[t * d..(t + 1) * d];
                    for j in 0..3 * h {
                        let a = da[j];
                        if a == 0.0 {
                            continue;
                        }
                        let wrow = &w[j * d..(j + 1) * d];
                        for i in 0..d {
                            dxt[i] += wrow[i] * a;
                        }
                    }
                }
            }
            dh_next = dhp;
        }
    }
}

impl Parameters for GruCell {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "w"), &self.w));
        out.push((join(prefix, "u"), &self.u));
        out.push((join(prefix, "b"), &self.b));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        out.push((join(prefix, "w"), &mut self.w));
        out.push((join(prefix, "u"), &mut self.u));
        out.push((join(prefix, "b"), &mut self.b));
    }
}

/// Forward and backward cells over the same input; output rows are
/// `[forward_h ; backward_h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

#[derive(Debug, Clone)]
pub struct BiGruTrace {
    fwd: GruTrace,
    bwd: GruTrace,
    /// `[T, 2h]`
    pub output: Vec<f64>,
}

impl BiGru {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            fwd: GruCell::zeros(input_dim, hidden),
            bwd: GruCell::zeros(input_dim, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let fwd = GruCell::init(input_dim, hidden, rng);
        let bwd = GruCell::init(input_dim, hidden, rng);
        Self { fwd, bwd }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    pub fn forward(&self, xs: &[f64], steps: usize) -> BiGruTrace {
        let h = self.hidden();
        let fwd = self.fwd.forward(xs, steps, false);
        let bwd = self.bwd.forward(xs, steps, true);
        let mut output = vec![0.0; steps * 2 * h];
        for t in 0..steps {
            output[t * 2 * h..t * 2 * h + h].copy_from_slice(&fwd.states[t * h..(t + 1) * h]);
            output[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&bwd.states[t * h..(t + 1) * h]);
        }
        BiGruTrace { fwd, bwd, output }
    }

    /// Returns input gradients when `want_dx`.
    pub fn backward(
        &self,
        xs: &[f64],
        tr: &BiGruTrace,
        d_output: &[f64],
        grad: &mut BiGru,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let h = self.hidden();
        let steps = tr.fwd.steps;
        let mut d_fwd = vec![0.0; steps * h];
        let mut d_bwd = vec![0.0; steps * h];
        for t in 0..steps {
            d_fwd[t * h..(t + 1) * h].copy_from_slice(&d_output[t * 2 * h..t * 2 * h + h]);
            d_bwd[t * h..(t + 1) * h].copy_from_slice(&d_output[t * 2 * h + h..(t + 1) * 2 * h]);
        }
        let mut dx = want_dx.then(|| vec![0.0; steps * self.input_dim()]);
        self.fwd.backward(xs, &tr.fwd, &d_fwd, &mut grad.fwd, dx.as_deref_mut());
        self.bwd.backward(xs, &tr.bwd, &d_bwd, &mut grad.bwd, dx.as_deref_mut());
        dx
    }
}

impl Parameters for BiGru {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.fwd.tensors(&join(prefix, "fwd"), out);
        self.bwd.tensors(&join(prefix, "bwd"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.fwd.tensors_mut(&join(prefix, "fwd"), out);
        self.bwd.tensors_mut(&join(prefix, "bwd"), out);
    }
}
