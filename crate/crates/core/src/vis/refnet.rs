//! Small fully connected regressor used as a smooth surrogate of the data.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::policy::Adam;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefNetConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for RefNetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 64, 32],
            epochs: 300,
            batch_size: 64,
            lr: 1e-3,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Per-epoch mean squared error on the standardized target.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

/// tanh MLP on standardized inputs with a linear output unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    y_mean: f64,
    y_std: f64,
}

impl RefNet {
    fn new(sizes: Vec<usize>, r: &mut rng::Rng) -> Self {
        let mut params = Vec::new();
        for w in sizes.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| r.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        let n_in = sizes[0];
        Self {
            sizes,
            params,
            x_mean: vec![0.0; n_in],
            x_std: vec![1.0; n_in],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn input_stats(&self) -> (&[f64], &[f64]) {
        (&self.x_mean, &self.x_std)
    }

    pub fn target_stats(&self) -> (f64, f64) {
        (self.y_mean, self.y_std)
    }

    pub fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.x_mean.iter().zip(&self.x_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Output in standardized target units for a standardized input row.
    pub fn forward_standardized(&self, z: &[f64]) -> f64 {
        let mut a = z.to_vec();
        let mut off = 0;
        let last = self.sizes.len() - 2;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut next = bias.to_vec();
            for (o, nv) in next.iter_mut().enumerate() {
                let row = &weights[o * n_in..(o + 1) * n_in];
                *nv += row.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>();
                if l != last {
                    *nv = nv.tanh();
                }
            }
            a = next;
            off += n_in * n_out + n_out;
        }
        a[0]
    }

    /// Prediction in the data's units.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.y_mean + self.y_std * self.forward_standardized(&self.standardize(row))
    }

    // Accumulates the gradient of 0.5·(f(z) − t)² into `grad`; returns the squared error.
    fn backprop(&self, z: &[f64], t: f64, grad: &mut [f64]) -> f64 {
        let n_layers = self.sizes.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(z.to_vec());
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            offsets.push(off);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let prev = &acts[l];
            let next: Vec<f64> = (0..n_out)
                .map(|o| {
                    let s = bias[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(x, y)| x * y).sum::<f64>();
                    if l + 1 < n_layers {
                        s.tanh()
                    } else {
                        s
                    }
                })
                .collect();
            acts.push(next);
            off += n_in * n_out + n_out;
        }
        let err = acts[n_layers][0] - t;
        let mut delta = vec![err];
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (gi, p) in g.iter_mut().zip(prev) {
                    *gi += d * p;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut back = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    for (b, w) in back.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *b += d * w;
                    }
                }
                for (b, a) in back.iter_mut().zip(prev) {
                    *b *= 1.0 - a * a;
                }
                delta = back;
            }
        }
        err * err
    }

    fn mse_standardized(&self, z: &[Vec<f64>], t: &[f64], rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter()
            .map(|&i| {
                let e = self.forward_standardized(&z[i]) - t[i];
                e * e
            })
            .sum::<f64>()
            / rows.len() as f64
    }
}

/// Fits a [`RefNet`] by mini-batch Adam on standardized data.
pub fn fit_refnet(data: &Dataset, cfg: &RefNetConfig) -> Result<(RefNet, LossTrace)> {
    if data.n_rows() < 10 {
        return Err(Error::data("too few rows to fit the reference network"));
    }
    let mut r = rng::stream(cfg.seed, "refnet", 0);
    let mut sizes = vec![data.n_features()];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut net = RefNet::new(sizes, &mut r);
    for (j, (m, s)) in data.feature_stats().into_iter().enumerate() {
        net.x_mean[j] = m;
        net.x_std[j] = if s > 0.0 { s } else { 1.0 };
    }
    net.y_mean = crate::data::mean(data.target());
    let ys = data.target_std();
    net.y_std = if ys > 0.0 { ys } else { 1.0 };

    let z: Vec<Vec<f64>> = (0..data.n_rows()).map(|i| net.standardize(&data.row(i))).collect();
    let t: Vec<f64> = data.target().iter().map(|y| (y - net.y_mean) / net.y_std).collect();

    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    order.shuffle(&mut r);
    let n_train = ((data.n_rows() as f64 * cfg.train_fraction).round() as usize).clamp(1, data.n_rows());
    let (train, valid) = order.split_at(n_train);
    let mut train = train.to_vec();
    let valid = valid.to_vec();

    let mut adam = Adam::new(net.params.len());
    let mut grad = vec![0.0; net.params.len()];
    let mut trace = LossTrace::default();
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut r);
        let mut sse = 0.0;
        for chunk in train.chunks(cfg.batch_size.max(1)) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                sse += net.backprop(&z[i], t[i], &mut grad);
            }
            // descent on MSE == ascent on its negative
            let scale = -1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.ascend(&mut net.params, &grad, cfg.lr);
        }
        let train_mse = sse / train.len() as f64;
        if !train_mse.is_finite() {
            return Err(Error::Diverged(format!(
                "reference network loss is not finite at epoch {}; try a lower learning rate",
                epoch + 1
            )));
        }
        trace.train.push(train_mse);
        trace.validation.push(net.mse_standardized(&z, &t, &valid));
    }
    Ok((net, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, f: impl Fn(f64, f64) -> f64, seed: u64) -> Dataset {
        let mut r = rng::stream(seed, "synthetic", 0);
        let x1: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let x2: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let y = x1.iter().zip(&x2).map(|(a, b)| f(*a, *b)).collect();
        Dataset::new(vec!["x1".into(), "x2".into()], vec![x1, x2], y).unwrap()
    }

    #[test]
    fn learns_a_linear_map() {
        let ds = synthetic(2000, |a, _| a, 1);
        let cfg = RefNetConfig { epochs: 50, ..Default::default() };
        let (_, trace) = fit_refnet(&ds, &cfg).unwrap();
        assert!(*trace.validation.last().unwrap() < 1e-3, "{:?}", trace.validation.last());
    }

    #[test]
    fn deterministic_traces() {
        let ds = synthetic(200, |a, b| a * b, 2);
        let cfg = RefNetConfig { epochs: 5, ..Default::default() };
        assert_eq!(fit_refnet(&ds, &cfg).unwrap().1, fit_refnet(&ds, &cfg).unwrap().1);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::stream(3, "t", 0);
        let net = RefNet::new(vec![3, 4, 5, 1], &mut r);
        let z = [0.3, -0.7, 1.1];
        let mut g = vec![0.0; net.params.len()];
        net.backprop(&z, 0.4, &mut g);
        for i in 0..net.params.len() {
            let h = 1e-6;
            let mut a = net.clone();
            a.params[i] += h;
            let mut b = net.clone();
            b.params[i] -= h;
            let la = 0.5 * (a.forward_standardized(&z) - 0.4).powi(2);
            let lb = 0.5 * (b.forward_standardized(&z) - 0.4).powi(2);
            let fd = (la - lb) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
    }
}
