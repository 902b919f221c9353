//! Grids of searches over methods, penalty weights, scenarios, noise levels
//! and seeds, with CSV output and summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_search, Method, SearchConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expr::{ExpressionTree, TokenPool};
use crate::vis::Scenario;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixSpec {
    pub methods: Vec<Method>,
    /// Penalty weights tried for [`Method::VisDsrGp`]; the others run at zero.
    pub betas: Vec<f64>,
    /// 1-based scenario numbers tried for [`Method::VisDsrGp`].
    pub scenarios: Vec<usize>,
    pub noise_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Settings shared by every cell; method, beta, scenario and seed are
    /// overridden per cell.
    pub base: SearchConfig,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            betas: vec![0.15],
            scenarios: vec![1],
            noise_levels: vec![0.0],
            seeds: (1..=10).collect(),
            base: SearchConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub method: Method,
    pub beta: f64,
    /// 0 when the method uses no scenario.
    pub scenario: usize,
    pub noise: f64,
    pub seed: u64,
    pub epochs: usize,
    pub converged: bool,
    pub seconds: f64,
    pub mpe: Option<f64>,
    pub recovered: Option<bool>,
    pub best: Option<String>,
    pub median_complexity: Option<usize>,
    pub error: Option<String>,
}

struct Cell {
    method: Method,
    beta: f64,
    scenario: usize,
    noise_index: usize,
    seed: u64,
}

impl SearchConfig {
    /// Applies the settings that distinguish `method`, keeping everything
    /// else.
    pub fn apply_method(&mut self, method: Method, scenario: Option<Scenario>) {
        match method {
            Method::Dsr => {
                self.gp = None;
                self.reward.beta = 0.0;
                self.reward.include_complexity = true;
                self.scenario = None;
            }
            Method::DsrGp => {
                self.gp.get_or_insert_with(Default::default);
                self.reward.beta = 0.0;
                self.reward.include_complexity = false;
                self.scenario = None;
            }
            Method::VisDsrGp => {
                self.gp.get_or_insert_with(Default::default);
                self.reward.include_complexity = true;
                self.scenario = scenario;
            }
        }
    }
}

/// Runs every cell of `spec` (in parallel). `datasets[i]` is the data for
/// `spec.noise_levels[i]`; `pool_for` gives the pool of each method.
/// Failed cells are recorded with their error and do not stop the grid.
pub fn run_matrix(
    spec: &MatrixSpec,
    datasets: &[Dataset],
    pool_for: impl Fn(Method) -> TokenPool,
    scenarios: &[Scenario],
    target: Option<&ExpressionTree>,
) -> Result<Vec<CellResult>> {
    if datasets.len() != spec.noise_levels.len() {
        return Err(Error::config("one dataset per noise level is required"));
    }
    let pools: BTreeMap<Method, TokenPool> = spec.methods.iter().map(|&m| (m, pool_for(m))).collect();
    let mut cells = Vec::new();
    for &method in &spec.methods {
        let (betas, scen) = if method == Method::VisDsrGp {
            (spec.betas.clone(), spec.scenarios.clone())
        } else {
            (vec![0.0], vec![0])
        };
        for &beta in &betas {
            for &scenario in &scen {
                for noise_index in 0..spec.noise_levels.len() {
                    for &seed in &spec.seeds {
                        cells.push(Cell {
                            method,
                            beta,
                            scenario,
                            noise_index,
                            seed,
                        });
                    }
                }
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|cell| {
            let mut cfg = spec.base.clone();
            cfg.seed = cell.seed;
            let scenario = (cell.scenario > 0).then(|| scenarios.get(cell.scenario - 1).cloned()).flatten();
            cfg.apply_method(cell.method, scenario);
            if cell.method == Method::VisDsrGp {
                cfg.reward.beta = cell.beta;
            }
            let mut out = CellResult {
                method: cell.method,
                beta: cell.beta,
                scenario: cell.scenario,
                noise: spec.noise_levels[cell.noise_index],
                seed: cell.seed,
                epochs: 0,
                converged: false,
                seconds: 0.0,
                mpe: None,
                recovered: None,
                best: None,
                median_complexity: None,
                error: None,
            };
            if cell.scenario > 0 && cell.scenario > scenarios.len() {
                out.error = Some(format!("scenario #{} is not available", cell.scenario));
                return out;
            }
            match run_search(&datasets[cell.noise_index], &pools[&cell.method], &cfg, target) {
                Ok(r) => {
                    out.epochs = r.epochs_to_converge();
                    out.converged = r.converged_epoch.is_some();
                    out.seconds = r.seconds;
                    out.mpe = r.best.as_ref().and_then(|b| b.mpe);
                    out.recovered = r.recovered;
                    out.best = r.best.as_ref().map(|b| b.infix.clone());
                    out.median_complexity = r.median_explored_complexity();
                }
                Err(e) => out.error = Some(e.to_string()),
            }
            out
        })
        .collect())
}

/// Writes `method, beta, scenario, noise, seed, epochs, seconds, mpe, recovered`.
pub fn write_matrix_csv(cells: &[CellResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "beta", "scenario", "noise", "seed", "epochs", "seconds", "mpe", "recovered"])?;
    for c in cells {
        w.write_record([
            c.method.name().to_string(),
            format!("{}", c.beta),
            c.scenario.to_string(),
            format!("{}", c.noise),
            c.seed.to_string(),
            c.epochs.to_string(),
            format!("{:.3}", c.seconds),
            c.mpe.map_or(String::new(), |m| format!("{m:.6}")),
            c.recovered.map_or(String::new(), |r| r.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub beta: f64,
    pub scenario: usize,
    pub noise: f64,
    pub runs: usize,
    pub failures: usize,
    pub epochs_mean: f64,
    pub epochs_se: f64,
    pub seconds_mean: f64,
    pub seconds_se: f64,
    pub mpe_mean: Option<f64>,
    pub mpe_se: Option<f64>,
    pub recovered: usize,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Mean and standard error per (method, beta, scenario, noise) over seeds.
pub fn summarize(cells: &[CellResult]) -> Vec<SummaryRow> {
    let mut groups: Vec<((Method, u64, usize, u64), Vec<&CellResult>)> = Vec::new();
    for c in cells {
        let key = (c.method, c.beta.to_bits(), c.scenario, c.noise.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(c),
            None => groups.push((key, vec![c])),
        }
    }
    groups
        .into_iter()
        .map(|(_, g)| {
            let ok: Vec<&&CellResult> = g.iter().filter(|c| c.error.is_none()).collect();
            let epochs: Vec<f64> = ok.iter().map(|c| c.epochs as f64).collect();
            let secs: Vec<f64> = ok.iter().map(|c| c.seconds).collect();
            let mpes: Vec<f64> = ok.iter().filter_map(|c| c.mpe).collect();
            let (em, es) = mean_se(&epochs);
            let (sm, ss) = mean_se(&secs);
            let (mm, ms) = mean_se(&mpes);
            SummaryRow {
                method: g[0].method,
                beta: g[0].beta,
                scenario: g[0].scenario,
                noise: g[0].noise,
                runs: g.len(),
                failures: g.len() - ok.len(),
                epochs_mean: em,
                epochs_se: es,
                seconds_mean: sm,
                seconds_se: ss,
                mpe_mean: (!mpes.is_empty()).then_some(mm),
                mpe_se: (!mpes.is_empty()).then_some(ms),
                recovered: ok.iter().filter(|c| c.recovered == Some(true)).count(),
            }
        })
        .collect()
}

/// Markdown table: one row per noise level, one column per method, each
/// cell the best expression over seeds (recovered first, then lowest MPE).
pub fn best_expression_table(cells: &[CellResult]) -> String {
    let mut methods: Vec<Method> = cells.iter().map(|c| c.method).collect();
    methods.sort();
    methods.dedup();
    let mut noises: Vec<f64> = cells.iter().map(|c| c.noise).collect();
    noises.sort_by(f64::total_cmp);
    noises.dedup();
    let mut out = String::from("| noise |");
    for m in &methods {
        let _ = write!(out, " {m} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(methods.len()));
    out.push('\n');
    for &n in &noises {
        let _ = write!(out, "| {:.0}% |", n * 100.0);
        for &m in &methods {
            let best = cells
                .iter()
                .filter(|c| c.method == m && c.noise == n && c.best.is_some())
                .min_by(|a, b| {
                    (a.recovered != Some(true))
                        .cmp(&(b.recovered != Some(true)))
                        .then(a.mpe.unwrap_or(f64::INFINITY).total_cmp(&b.mpe.unwrap_or(f64::INFINITY)))
                });
            match best {
                Some(c) => {
                    let _ = write!(out, " `{}` |", c.best.as_deref().unwrap_or(""));
                }
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}
