//! Actor-critic MLP with hand-written backpropagation.
//!
//! Inputs are sparse (binary grids plus a short inventory vector), so the
//! first layer is stored input-major and only active rows are touched. The
//! policy head is evaluated only for the rows a mask allows.

use rand::Rng;

use crate::error::{Error, Result};

/// Sparse input vector: `(index, value)` pairs with distinct indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observation {
    pub entries: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    /// First layer, stored `[input][hidden0]`.
    first: Dense,
    /// Remaining trunk layers, stored `[out][in]`.
    trunk: Vec<Dense>,
    /// Policy head, `[action][hidden_last]`.
    policy: Dense,
    /// Value head, `[1][hidden_last]`.
    value: Dense,
    total: usize,
}

impl Layout {
    fn new(input: usize, hidden: &[usize], actions: usize) -> Self {
        let mut off = 0;
        let mut dense = |rows: usize, cols: usize| {
            let d = Dense {
                w: off,
                b: off + rows * cols,
                rows,
                cols,
            };
            off += rows * cols + rows;
            d
        };
        // The first layer keeps the `rows = outputs` convention for its bias.
        let first = dense(hidden[0], input);
        let trunk = hidden.windows(2).map(|p| dense(p[1], p[0])).collect();
        let last = *hidden.last().expect("at least one hidden layer");
        let policy = dense(actions, last);
        let value = dense(1, last);
        Self {
            first,
            trunk,
            policy,
            value,
            total: off,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    input: usize,
    hidden: Vec<usize>,
    actions: usize,
    layout: Layout,
    pub(crate) params: Vec<f64>,
}

/// Hidden activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    layers: Vec<Vec<f64>>,
}

impl Activations {
    fn last(&self) -> &[f64] {
        self.layers.last().expect("non-empty")
    }
}

impl PolicyNet {
    /// Tanh trunk of the given widths, initialized uniformly with
    /// Glorot bounds; the policy head is shrunk so initial logits are near 0.
    pub fn new(input: usize, hidden: &[usize], actions: usize, rng: &mut impl Rng) -> Result<Self> {
        if input == 0 || actions == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Config(format!(
                "network shape must be positive (input {input}, hidden {hidden:?}, actions {actions})"
            )));
        }
        let layout = Layout::new(input, hidden, actions);
        let mut params = vec![0.0; layout.total];
        let mut init = |d: &Dense, gain: f64, params: &mut [f64]| {
            let bound = gain * (6.0 / (d.rows + d.cols) as f64).sqrt();
            for p in &mut params[d.w..d.w + d.rows * d.cols] {
                *p = rng.gen_range(-bound..bound);
            }
        };
        init(&layout.first, 1.0, &mut params);
        for d in &layout.trunk {
            init(d, 1.0, &mut params);
        }
        init(&layout.policy, 0.01, &mut params);
        init(&layout.value, 1.0, &mut params);
        Ok(Self {
            input,
            hidden: hidden.to_vec(),
            actions,
            layout,
            params,
        })
    }

    pub(crate) fn from_parts(input: usize, hidden: &[usize], actions: usize, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(input, hidden, actions);
        if params.len() != layout.total {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self {
            input,
            hidden: hidden.to_vec(),
            actions,
            layout,
            params,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, obs: &Observation) -> Activations {
        let p = &self.params;
        let f = self.layout.first;
        let mut h: Vec<f64> = p[f.b..f.b + f.rows].to_vec();
        for &(i, v) in &obs.entries {
            let row = &p[f.w + i as usize * f.rows..f.w + (i as usize + 1) * f.rows];
            for (hj, wj) in h.iter_mut().zip(row) {
                *hj += v * wj;
            }
        }
        h.iter_mut().for_each(|v| *v = v.tanh());
        let mut layers = vec![h];
        for d in &self.layout.trunk {
            let prev = layers.last().expect("non-empty");
            let out: Vec<f64> = (0..d.rows)
                .map(|o| {
                    let row = &p[d.w + o * d.cols..d.w + (o + 1) * d.cols];
                    (p[d.b + o] + dot(row, prev)).tanh()
                })
                .collect();
            layers.push(out);
        }
        Activations { layers }
    }

    pub fn logit(&self, acts: &Activations, action: usize) -> f64 {
        let d = self.layout.policy;
        let row = &self.params[d.w + action * d.cols..d.w + (action + 1) * d.cols];
        self.params[d.b + action] + dot(row, acts.last())
    }

    pub fn logits_for(&self, acts: &Activations, actions: &[usize]) -> Vec<f64> {
        actions.iter().map(|&a| self.logit(acts, a)).collect()
    }

    /// Logits over the whole action space.
    pub fn logits(&self, obs: &Observation) -> Vec<f64> {
        let acts = self.forward(obs);
        (0..self.actions).map(|a| self.logit(&acts, a)).collect()
    }

    pub fn value(&self, acts: &Activations) -> f64 {
        let d = self.layout.value;
        self.params[d.b] + dot(&self.params[d.w..d.w + d.cols], acts.last())
    }

    /// Accumulates into `grad` the gradient for one sample, given the loss
    /// derivatives with respect to the logits of `actions` and the value.
    pub fn backward(
        &self,
        obs: &Observation,
        acts: &Activations,
        actions: &[usize],
        dlogits: &[f64],
        dvalue: f64,
        grad: &mut [f64],
    ) {
        let p = &self.params;
        let last = acts.last();
        let mut dh = vec![0.0; last.len()];

        let d = self.layout.policy;
        for (&a, &g) in actions.iter().zip(dlogits) {
            if g == 0.0 {
                continue;
            }
            let w = d.w + a * d.cols;
            for k in 0..d.cols {
                grad[w + k] += g * last[k];
                dh[k] += g * p[w + k];
            }
            grad[d.b + a] += g;
        }
        let d = self.layout.value;
        for k in 0..d.cols {
            grad[d.w + k] += dvalue * last[k];
            dh[k] += dvalue * p[d.w + k];
        }
        grad[d.b] += dvalue;

        for (li, d) in self.layout.trunk.iter().enumerate().rev() {
            let out = &acts.layers[li + 1];
            let prev = &acts.layers[li];
            let dpre: Vec<f64> = dh.iter().zip(out).map(|(g, h)| g * (1.0 - h * h)).collect();
            let mut dprev = vec![0.0; prev.len()];
            for o in 0..d.rows {
                let g = dpre[o];
                if g == 0.0 {
                    continue;
                }
                let w = d.w + o * d.cols;
                for i in 0..d.cols {
                    grad[w + i] += g * prev[i];
                    dprev[i] += g * p[w + i];
                }
                grad[d.b + o] += g;
            }
            dh = dprev;
        }

        let f = self.layout.first;
        let dpre: Vec<f64> = dh.iter().zip(&acts.layers[0]).map(|(g, h)| g * (1.0 - h * h)).collect();
        for &(i, v) in &obs.entries {
            let w = f.w + i as usize * f.rows;
            for (gj, dj) in grad[w..w + f.rows].iter_mut().zip(&dpre) {
                *gj += v * dj;
            }
        }
        for (gj, dj) in grad[f.b..f.b + f.rows].iter_mut().zip(&dpre) {
            *gj += dj;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub(crate) t: u64,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}
