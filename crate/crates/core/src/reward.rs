//! Reward: normalized error, complexity normalization and the
//! variable-interaction penalty.

use serde::{Deserialize, Serialize};

use crate::data::population_std;
use crate::error::{Error, Result};

/// Reward settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub beta: f64,
    /// Number of leading epochs during which the interaction penalty applies.
    pub penalty_epochs: usize,
    pub p_min: usize,
    pub p_max: usize,
    /// When false, the complexity term is dropped (`norm_p` treated as 0).
    pub include_complexity: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta: 0.15,
            penalty_epochs: 10,
            p_min: 10,
            p_max: 40,
            include_complexity: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if self.p_min < 1 || self.p_max <= self.p_min {
            return Err(Error::config(format!(
                "complexity range needs 1 <= p_min < p_max, got ({}, {})",
                self.p_min, self.p_max
            )));
        }
        Ok(())
    }
}

/// Per-candidate reward components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub l_e: f64,
    pub norm_p: f64,
    pub r_c: f64,
    pub penalized: bool,
    pub r: f64,
}

impl RewardBreakdown {
    /// Breakdown for a candidate that could not be evaluated.
    pub fn invalid() -> Self {
        Self {
            l_e: f64::INFINITY,
            norm_p: 0.0,
            r_c: 0.0,
            penalized: false,
            r: 0.0,
        }
    }
}

/// Root-mean-square error divided by the population standard deviation of `y`.
pub fn nrmse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() || y.len() < 2 {
        return Err(Error::config(format!(
            "nrmse needs equal lengths >= 2, got {} and {}",
            pred.len(),
            y.len()
        )));
    }
    let sigma = population_std(y);
    if sigma <= 0.0 {
        return Err(Error::config("target has zero variance"));
    }
    Ok(rmse(pred, y) / sigma)
}

pub(crate) fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    let sse: f64 = pred.iter().zip(y).map(|(p, t)| (t - p) * (t - p)).sum();
    (sse / y.len() as f64).sqrt()
}

/// Complexity normalized onto the length range; values below `p_min` are
/// reflected so that very short expressions score worse than the top of the
/// range.
pub fn norm_complexity(p: usize, p_min: usize, p_max: usize) -> f64 {
    let (p, lo, hi) = (p as f64, p_min as f64, p_max as f64);
    if p >= lo {
        (p - lo) / (hi - lo)
    } else {
        (hi - p) / (hi - lo)
    }
}

/// `2 / ((1 + L_e) + (1 + norm_p))`; zero for non-finite error.
pub fn combined_reward(l_e: f64, norm_p: f64) -> f64 {
    if !l_e.is_finite() || !norm_p.is_finite() {
        return 0.0;
    }
    2.0 / ((1.0 + l_e) + (1.0 + norm_p))
}

pub fn apply_interaction_penalty(
    l_e: f64,
    norm_p: f64,
    r_c: f64,
    has_recommended: bool,
    epoch: usize,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let penalized = cfg.beta > 0.0 && !has_recommended && epoch <= cfg.penalty_epochs;
    RewardBreakdown {
        l_e,
        norm_p,
        r_c,
        penalized,
        r: if penalized { r_c * (1.0 - cfg.beta) } else { r_c },
    }
}

/// True when the penalty can apply at `epoch`, i.e. the checker needs to run.
pub fn penalty_active(epoch: usize, cfg: &RewardConfig) -> bool {
    cfg.beta > 0.0 && epoch <= cfg.penalty_epochs
}

/// Full breakdown from an error and a complexity.
pub fn score(l_e: f64, complexity: usize, has_recommended: bool, epoch: usize, cfg: &RewardConfig) -> RewardBreakdown {
    if !l_e.is_finite() {
        return RewardBreakdown::invalid();
    }
    let norm_p = if cfg.include_complexity {
        norm_complexity(complexity, cfg.p_min, cfg.p_max)
    } else {
        0.0
    };
    let r_c = combined_reward(l_e, norm_p);
    apply_interaction_penalty(l_e, norm_p, r_c, has_recommended, epoch, cfg)
}
