//! Leader/follower pair simulation.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::models::{step_ghr, step_gm, step_krauss, CarFollowingModel, VehicleParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expr::ExpressionTree;
use crate::rng;

/// Defaults give 720 five-row pairs with the follower starting near rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub model: CarFollowingModel,
    pub vehicle: VehicleParams,
    pub n_pairs: usize,
    /// Rows emitted per pair (after warm-up).
    pub horizon: usize,
    pub warmup: usize,
    /// Leader target speeds are drawn uniformly from this range (m/s).
    pub leader_speed: (f64, f64),
    /// Steps between leader target speed draws.
    pub leader_period: usize,
    /// Initial gap range (m).
    pub initial_gap: (f64, f64),
    /// Follower's initial speed range (m/s); `None` starts it at the
    /// leader's initial speed.
    pub follower_speed: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            model: CarFollowingModel::Krauss,
            vehicle: VehicleParams::default(),
            n_pairs: 720,
            horizon: 5,
            warmup: 5,
            leader_speed: (0.0, 30.0),
            leader_period: 10,
            initial_gap: (10.0, 100.0),
            follower_speed: Some((0.0, 0.0)),
            seed: 0,
        }
    }
}

impl GenerateConfig {
    pub fn for_model(model: CarFollowingModel, seed: u64) -> Self {
        Self {
            model,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        let (lo, hi) = self.leader_speed;
        let (g0, g1) = self.initial_gap;
        if self.n_pairs == 0 || self.horizon == 0 || self.leader_period == 0 {
            return Err(Error::config("n_pairs, horizon and leader_period must be positive"));
        }
        if !(0.0 <= lo && lo < hi && hi <= self.vehicle.v_max) || !(0.0 < g0 && g0 <= g1) {
            return Err(Error::config("invalid leader speed or initial gap range"));
        }
        Ok(())
    }
}

/// Rows of one pair, or `None` if the pair collided.
fn simulate_pair(cfg: &GenerateConfig, index: usize) -> Option<Vec<[f64; 5]>> {
    let p = &cfg.vehicle;
    let mut r = rng::stream(cfg.seed, "traffic-pair", index as u64);
    let (lo, hi) = cfg.leader_speed;
    let steps = cfg.warmup + cfg.horizon;
    let waypoints: Vec<f64> = (0..=steps / cfg.leader_period + 1)
        .map(|_| r.random_range(lo..=hi))
        .collect();
    let planned = |t: usize| {
        let j = t / cfg.leader_period;
        let frac = (t % cfg.leader_period) as f64 / cfg.leader_period as f64;
        waypoints[j] + (waypoints[j + 1] - waypoints[j]) * frac
    };

    let mut v_l = waypoints[0];
    let mut gap: f64 = r.random_range(cfg.initial_gap.0..=cfg.initial_gap.1);
    let mut v_f = match cfg.follower_speed {
        Some((a, b)) => r.random_range(a..=b),
        None => v_l,
    }
    .max(0.5);
    let (mut dv_lag, mut gap_lag) = (v_l - v_f, gap);

    let mut rows = Vec::with_capacity(cfg.horizon);
    for t in 0..steps {
        let next_f = match cfg.model {
            CarFollowingModel::Krauss => step_krauss(v_f, v_l, gap, p),
            CarFollowingModel::Gm { c } => step_gm(v_f, v_l, c, p),
            CarFollowingModel::Ghr { k1, k2, k3 } => step_ghr(v_f, dv_lag, gap_lag, (k1, k2, k3), p),
        };
        if t >= cfg.warmup {
            rows.push(match cfg.model {
                CarFollowingModel::Ghr { .. } => [v_f, v_l, gap_lag, dv_lag, next_f],
                _ => [v_f, v_l, gap, gap - v_l * p.dt, next_f],
            });
        }
        let next_l = planned(t + 1)
            .clamp(v_l - p.b * p.dt, v_l + p.a_max * p.dt)
            .clamp(0.0, hi);
        dv_lag = v_l - v_f;
        gap_lag = gap;
        gap += (next_l - next_f) * p.dt;
        v_f = next_f;
        v_l = next_l;
        if gap <= 0.0 {
            return None;
        }
    }
    Some(rows)
}

/// Simulates leader/follower pairs until `cfg.n_pairs` collision-free
/// trajectories are collected. Colliding trajectories are discarded whole and
/// their rows counted in `meta.dropped_rows`.
pub fn generate_dataset(cfg: &GenerateConfig) -> Result<Dataset> {
    cfg.validate()?;
    let max_attempts = 20 * cfg.n_pairs;
    let mut kept: Vec<Vec<[f64; 5]>> = Vec::with_capacity(cfg.n_pairs);
    let mut dropped = 0;
    let mut next = 0;
    while kept.len() < cfg.n_pairs {
        if next >= max_attempts {
            return Err(Error::config(format!(
                "only {} of {} pairs were collision-free after {max_attempts} attempts",
                kept.len(),
                cfg.n_pairs
            )));
        }
        let want = cfg.n_pairs - kept.len();
        let round: Vec<_> = (next..next + want).into_par_iter().map(|i| simulate_pair(cfg, i)).collect();
        next += want;
        for trace in round {
            match trace {
                Some(rows) => kept.push(rows),
                None => dropped += cfg.horizon,
            }
        }
    }
    let mut columns = vec![Vec::new(); 4];
    let mut target = Vec::new();
    for rows in &kept {
        for row in rows {
            for (c, v) in columns.iter_mut().zip(row) {
                c.push(*v);
            }
            target.push(row[4]);
        }
    }
    let names = cfg.model.feature_names().iter().map(|s| s.to_string()).collect();
    let mut ds = Dataset::new(names, columns, target)?;
    ds.meta.model = Some(cfg.model.name().to_string());
    ds.meta.params = Some(serde_json::to_value(cfg)?);
    ds.meta.seed = Some(cfg.seed);
    ds.meta.dropped_rows = dropped;
    Ok(ds)
}

/// Recomputes the clean target from the feature columns with the model's
/// step function.
pub fn regenerate_targets(model: CarFollowingModel, p: &VehicleParams, data: &Dataset) -> Result<Vec<f64>> {
    let [a, b, c, d] = model.feature_names();
    let col = |name: &str| {
        data.column(name)
            .ok_or_else(|| Error::data(format!("dataset has no `{name}` column")))
    };
    let (x0, x1, x2, x3) = (col(a)?, col(b)?, col(c)?, col(d)?);
    Ok((0..data.n_rows())
        .map(|i| match model {
            CarFollowingModel::Krauss => step_krauss(x0[i], x1[i], x2[i], p),
            CarFollowingModel::Gm { c } => step_gm(x0[i], x1[i], c, p),
            CarFollowingModel::Ghr { k1, k2, k3 } => step_ghr(x0[i], x3[i], x2[i], (k1, k2, k3), p),
        })
        .collect())
}

/// The closed-form target for a model with default vehicle parameters, with
/// numeric literals in place of named parameters.
pub fn target_expression(model: CarFollowingModel) -> ExpressionTree {
    let text = match model {
        CarFollowingModel::Krauss => "min + v_f 2.6 + v_l / * 9 ds + + v_f v_l 9".to_string(),
        CarFollowingModel::Gm { c } => format!("+ v_f * {c:?} - v_l v_f"),
        CarFollowingModel::Ghr { k1, k2, k3 } => {
            format!("+ v_f / * * {k1:?} pow v_f {k2:?} dv_lag pow s_f_lag {k3:?}")
        }
    };
    ExpressionTree::parse_prefix(&text, None).expect("target expressions are well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::evaluate;

    #[test]
    fn default_sizes() {
        for model in [
            CarFollowingModel::Krauss,
            CarFollowingModel::GM_DEFAULT,
            CarFollowingModel::GHR_DEFAULT,
        ] {
            let ds = generate_dataset(&GenerateConfig::for_model(model, 7)).unwrap();
            eprintln!("{model}: rows {} dropped {}", ds.n_rows(), ds.meta.dropped_rows);
            assert!((3400..=3800).contains(&ds.n_rows()), "{model}: {}", ds.n_rows());
        }
    }

    #[test]
    fn targets_regenerate_exactly() {
        for model in [
            CarFollowingModel::Krauss,
            CarFollowingModel::GM_DEFAULT,
            CarFollowingModel::GHR_DEFAULT,
        ] {
            let cfg = GenerateConfig::for_model(model, 3);
            let ds = generate_dataset(&cfg).unwrap();
            assert_eq!(regenerate_targets(model, &cfg.vehicle, &ds).unwrap(), ds.target());
            let f = evaluate(&target_expression(model), &ds).unwrap();
            // the closed form ignores the [0, v_max] clamp
            let worst = f
                .iter()
                .zip(ds.target())
                .filter(|(_, y)| **y > 0.0 && **y < cfg.vehicle.v_max)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-9, "{model}: {worst}");
        }
    }

    #[test]
    fn row_invariants() {
        let ds = generate_dataset(&GenerateConfig::default()).unwrap();
        let (v_f, v_l, s_f, d) = (
            ds.column("v_f").unwrap(),
            ds.column("v_l").unwrap(),
            ds.column("s_f").unwrap(),
            ds.column("ds").unwrap(),
        );
        for i in 0..ds.n_rows() {
            assert!(s_f[i] > 0.0);
            assert!((0.0..=55.55).contains(&v_f[i]) && (0.0..=55.55).contains(&v_l[i]));
            assert_eq!(d[i], s_f[i] - v_l[i]);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_dataset(&GenerateConfig::for_model(CarFollowingModel::GM_DEFAULT, 11)).unwrap();
        let b = generate_dataset(&GenerateConfig::for_model(CarFollowingModel::GM_DEFAULT, 11)).unwrap();
        assert_eq!(a, b);
    }
}
