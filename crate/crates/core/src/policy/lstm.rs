//! Single-layer LSTM over (parent, sibling) inputs with a linear token head.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Shapes of the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub hidden: usize,
    pub n_tokens: usize,
}

impl PolicyShape {
    /// One-hot parent plus one-hot sibling, each with an extra "empty" index.
    pub fn input_dim(&self) -> usize {
        2 * (self.n_tokens + 1)
    }

    pub fn n_params(&self) -> usize {
        let (h, d, n) = (self.hidden, self.input_dim(), self.n_tokens);
        4 * h * d + 4 * h * h + 4 * h + n * h + n
    }

    // offsets of W, U, b, V, v
    fn offsets(&self) -> [usize; 5] {
        let (h, d, n) = (self.hidden, self.input_dim(), self.n_tokens);
        let w = 0;
        let u = w + 4 * h * d;
        let b = u + 4 * h * h;
        let v = b + 4 * h;
        let c = v + n * h;
        let _ = c + n;
        [w, u, b, v, c]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    shape: PolicyShape,
    params: Vec<f64>,
}

/// Cached activations for one step, needed by the backward pass.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub parent: usize,
    pub sibling: usize,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    pub(crate) c: Vec<f64>,
    pub h: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl PolicyNet {
    /// Weights uniform in ±1/sqrt(H), output bias zero.
    pub fn new(shape: PolicyShape, seed: u64) -> Self {
        let mut r = rng::stream(seed, "policy-init", 0);
        let scale = 1.0 / (shape.hidden as f64).sqrt();
        let [_, _, _, _, out_bias] = shape.offsets();
        let params = (0..shape.n_params())
            .map(|i| if i >= out_bias { 0.0 } else { r.random_range(-scale..scale) })
            .collect();
        Self { shape, params }
    }

    pub fn from_params(shape: PolicyShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.n_params() {
            return Err(Error::config(format!(
                "expected {} policy parameters, got {}",
                shape.n_params(),
                params.len()
            )));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> PolicyShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn empty_index(&self) -> usize {
        self.shape.n_tokens
    }

    pub fn zero_state(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.shape.hidden], vec![0.0; self.shape.hidden])
    }

    /// One recurrent step. Writes logits into `logits` and returns the cache.
    pub fn step(&self, parent: usize, sibling: usize, h_prev: &[f64], c_prev: &[f64], logits: &mut [f64]) -> StepCache {
        let PolicyShape { hidden: hd, n_tokens: n } = self.shape;
        let d = self.shape.input_dim();
        let [ow, ou, ob, ov, oc] = self.shape.offsets();
        let p = &self.params;
        let sib_col = n + 1 + sibling;
        let mut gates = vec![0.0; 4 * hd];
        for (r, z) in gates.iter_mut().enumerate() {
            let mut acc = p[ob + r] + p[ow + r * d + parent] + p[ow + r * d + sib_col];
            let urow = &p[ou + r * hd..ou + (r + 1) * hd];
            for (u, hv) in urow.iter().zip(h_prev) {
                acc += u * hv;
            }
            *z = acc;
        }
        let mut c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for j in 0..hd {
            let i_g = sigmoid(gates[j]);
            let f_g = sigmoid(gates[hd + j]);
            let g_g = gates[2 * hd + j].tanh();
            let o_g = sigmoid(gates[3 * hd + j]);
            gates[j] = i_g;
            gates[hd + j] = f_g;
            gates[2 * hd + j] = g_g;
            gates[3 * hd + j] = o_g;
            c[j] = f_g * c_prev[j] + i_g * g_g;
            h[j] = o_g * c[j].tanh();
        }
        for (k, l) in logits.iter_mut().enumerate().take(n) {
            let vrow = &p[ov + k * hd..ov + (k + 1) * hd];
            *l = p[oc + k] + vrow.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
        }
        StepCache {
            parent,
            sibling,
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gates,
            c,
            h,
        }
    }

    /// Backpropagates per-step logit gradients `dlogits[t]` through the
    /// sequence `caches`, accumulating into `grad`.
    pub fn backward(&self, caches: &[StepCache], dlogits: &[Vec<f64>], grad: &mut [f64]) {
        let PolicyShape { hidden: hd, n_tokens: n } = self.shape;
        let d = self.shape.input_dim();
        let [ow, ou, ob, ov, oc] = self.shape.offsets();
        let p = &self.params;
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dz = vec![0.0; 4 * hd];
        for (cache, dl) in caches.iter().zip(dlogits).rev() {
            let mut dh = dh_next.clone();
            for k in 0..n {
                let g = dl[k];
                if g == 0.0 {
                    continue;
                }
                grad[oc + k] += g;
                for j in 0..hd {
                    grad[ov + k * hd + j] += g * cache.h[j];
                    dh[j] += g * p[ov + k * hd + j];
                }
            }
            for j in 0..hd {
                let (i_g, f_g, g_g, o_g) = (
                    cache.gates[j],
                    cache.gates[hd + j],
                    cache.gates[2 * hd + j],
                    cache.gates[3 * hd + j],
                );
                let tc = cache.c[j].tanh();
                let dc = dc_next[j] + dh[j] * o_g * (1.0 - tc * tc);
                dz[j] = dc * g_g * i_g * (1.0 - i_g);
                dz[hd + j] = dc * cache.c_prev[j] * f_g * (1.0 - f_g);
                dz[2 * hd + j] = dc * i_g * (1.0 - g_g * g_g);
                dz[3 * hd + j] = dh[j] * tc * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            let sib_col = n + 1 + cache.sibling;
            for r in 0..4 * hd {
                let g = dz[r];
                grad[ob + r] += g;
                grad[ow + r * d + cache.parent] += g;
                grad[ow + r * d + sib_col] += g;
                for j in 0..hd {
                    grad[ou + r * hd + j] += g * cache.h_prev[j];
                    dh_next[j] += g * p[ou + r * hd + j];
                }
            }
        }
    }
}

/// Softmax over entries where `mask` is true; others get probability 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool], probs: &mut [f64]) {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for ((p, l), m) in probs.iter_mut().zip(logits).zip(mask) {
        *p = if *m { (l - max).exp() } else { 0.0 };
        total += *p;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
}
