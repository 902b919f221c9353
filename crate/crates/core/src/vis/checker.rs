//! Does a candidate expression contain a recommended variable combination?
//!
//! Presence is judged numerically: a single variable must have a non-zero
//! first partial, a combination a non-zero mixed partial over all of its
//! variables, probed at a handful of dataset rows.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::select::Scenario;
use crate::data::{population_std, Dataset};
use crate::expr::{ExpressionTree, Program};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioMatch {
    /// At least one combination of the scenario must be present.
    #[default]
    Any,
    /// Every combination must be present.
    All,
}

/// Relative size below which a probed partial counts as zero.
pub const PRESENCE_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct InteractionChecker {
    names: Vec<String>,
    /// Candidate probe rows in the order they are tried.
    rows: Vec<Vec<f64>>,
    steps: Vec<f64>,
    stds: Vec<f64>,
    sigma_y: f64,
    probes: usize,
}

impl InteractionChecker {
    /// Probes `probes` rows; up to four times as many are held in reserve
    /// for rows where the candidate is not finite.
    pub fn new(data: &Dataset, probes: usize, seed: u64) -> Self {
        let n = data.n_rows();
        let mut r = rng::stream(seed, "checker-rows", 0);
        let take = (4 * probes).min(n);
        let rows = sample(&mut r, n, take).into_iter().map(|i| data.row(i)).collect();
        let stds: Vec<f64> = data
            .columns()
            .iter()
            .map(|c| {
                let s = population_std(c);
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        let sigma_y = match population_std(data.target()) {
            s if s > 0.0 => s,
            _ => 1.0,
        };
        Self {
            names: data.names().to_vec(),
            rows,
            steps: stds.iter().map(|s| 0.05 * s).collect(),
            stds,
            sigma_y,
            probes,
        }
    }

    /// Whether the combination `vars` is present in `tree` (see module docs).
    pub fn combination_present(&self, tree: &ExpressionTree, vars: &[String]) -> bool {
        let Ok(prog) = Program::compile(tree, &self.names) else {
            return false;
        };
        self.present_compiled(tree, &prog, vars)
    }

    fn present_compiled(&self, tree: &ExpressionTree, prog: &Program, vars: &[String]) -> bool {
        if vars.is_empty() || !vars.iter().all(|v| tree.contains_variable(v)) {
            return false;
        }
        let Some(dims) = vars
            .iter()
            .map(|v| self.names.iter().position(|n| n == v))
            .collect::<Option<Vec<_>>>()
        else {
            return false;
        };
        let m = dims.len();
        let corners = 1usize << m;
        let scale: f64 = dims.iter().map(|&d| self.stds[d]).product::<f64>() / self.sigma_y;
        let denom: f64 = dims.iter().map(|&d| 2.0 * self.steps[d]).product();
        let mut columns = vec![vec![0.0; corners]; self.names.len()];
        let mut sum_sq = 0.0;
        let mut used = 0;
        for row in &self.rows {
            if used == self.probes {
                break;
            }
            for (j, col) in columns.iter_mut().enumerate() {
                col.iter_mut().for_each(|v| *v = row[j]);
            }
            for mask in 0..corners {
                for (bit, &d) in dims.iter().enumerate() {
                    let s = if mask >> bit & 1 == 1 { 1.0 } else { -1.0 };
                    columns[d][mask] = row[d] + s * self.steps[d];
                }
            }
            let cols: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
            let Ok(values) = prog.eval(&cols, corners) else {
                continue;
            };
            let acc: f64 = (0..corners)
                .map(|mask| {
                    let neg = m - (mask as u32).count_ones() as usize;
                    if neg % 2 == 0 {
                        values[mask]
                    } else {
                        -values[mask]
                    }
                })
                .sum();
            let d = acc / denom * scale;
            sum_sq += d * d;
            used += 1;
        }
        used > 0 && (sum_sq / used as f64).sqrt() > PRESENCE_THRESHOLD
    }

    /// True if `tree` satisfies any of `scenario`'s combinations (or all of
    /// them under [`ScenarioMatch::All`]).
    pub fn has_recommended(&self, tree: &ExpressionTree, scenario: &Scenario, mode: ScenarioMatch) -> bool {
        let Ok(prog) = Program::compile(tree, &self.names) else {
            return false;
        };
        let mut hits = scenario.iter().map(|vars| self.present_compiled(tree, &prog, vars));
        match mode {
            ScenarioMatch::Any => hits.any(|h| h),
            ScenarioMatch::All => !scenario.is_empty() && hits.all(|h| h),
        }
    }
}
