//! Risk-seeking policy gradient with an entropy bonus, applied by Adam.

use serde::{Deserialize, Serialize};

use super::lstm::PolicyNet;
use super::sampler::Rollout;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub risk_eps: f64,
    pub lr: f64,
    pub entropy_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            risk_eps: 0.05,
            lr: 5e-4,
            entropy_weight: 5e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub mean_reward: f64,
    pub best_reward: f64,
    pub quantile: f64,
    pub selected: usize,
    pub updated: bool,
}

/// Adam state for gradient ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// `params += lr · m̂ / (sqrt(v̂) + eps)`
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// `(1 − eps)`-quantile of `rewards`, linearly interpolated between order
/// statistics.
pub fn risk_quantile(rewards: &[f64], eps: f64) -> f64 {
    let mut sorted = rewards.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (1.0 - eps) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Adds `weight·∇log p(τ) + entropy_weight·∇H(τ)` for one rollout to `grad`.
pub fn accumulate_gradient(net: &PolicyNet, rollout: &Rollout, weight: f64, entropy_weight: f64, grad: &mut [f64]) {
    let dlogits: Vec<Vec<f64>> = rollout
        .probs
        .iter()
        .zip(&rollout.tokens)
        .map(|(p, &a)| {
            let h: f64 = -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>();
            p.iter()
                .enumerate()
                .map(|(k, &pk)| {
                    if pk <= 0.0 {
                        return 0.0;
                    }
                    let score = if k == a { 1.0 - pk } else { -pk };
                    weight * score - entropy_weight * pk * (pk.ln() + h)
                })
                .collect()
        })
        .collect();
    net.backward(&rollout.caches, &dlogits, grad);
}

/// Gradient of `log p(τ)` alone.
pub fn log_prob_gradient(net: &PolicyNet, rollout: &Rollout) -> Vec<f64> {
    let mut g = vec![0.0; net.params().len()];
    accumulate_gradient(net, rollout, 1.0, 0.0, &mut g);
    g
}

/// Risk-seeking gradient estimate over a batch: mean over samples with
/// `R > R_ε` of `(R − R_ε)∇log p + λ∇H`. Returns the gradient (zero if no
/// sample clears the quantile) and diagnostics.
pub fn risk_seeking_gradient(
    net: &PolicyNet,
    rollouts: &[&Rollout],
    rewards: &[f64],
    cfg: &TrainConfig,
) -> (Vec<f64>, TrainDiagnostics) {
    let mut grad = vec![0.0; net.params().len()];
    let n = rewards.len();
    let mean = rewards.iter().sum::<f64>() / n.max(1) as f64;
    let best = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let q = if n == 0 { 0.0 } else { risk_quantile(rewards, cfg.risk_eps) };
    let chosen: Vec<usize> = (0..n).filter(|&i| rewards[i] > q).collect();
    for &i in &chosen {
        let w = (rewards[i] - q) / chosen.len() as f64;
        accumulate_gradient(net, rollouts[i], w, cfg.entropy_weight / chosen.len() as f64, &mut grad);
    }
    let diag = TrainDiagnostics {
        mean_reward: mean,
        best_reward: best,
        quantile: q,
        selected: chosen.len(),
        updated: !chosen.is_empty(),
    };
    (grad, diag)
}

/// One training step. With no sample strictly above the quantile (e.g. all
/// rewards equal) the parameters are left untouched.
pub fn train_step(
    net: &mut PolicyNet,
    adam: &mut Adam,
    rollouts: &[&Rollout],
    rewards: &[f64],
    cfg: &TrainConfig,
) -> TrainDiagnostics {
    let (grad, diag) = risk_seeking_gradient(net, rollouts, rewards, cfg);
    if diag.updated {
        adam.ascend(net.params_mut(), &grad, cfg.lr);
    } else if !rewards.is_empty() {
        log::warn!("no sample above the reward quantile {:.6}; skipping update", diag.quantile);
    }
    diag
}
