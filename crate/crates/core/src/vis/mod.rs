//! Variable interaction selection: fit a smooth reference network, score
//! every variable subset by its mean squared mixed partial, and group the
//! strongest subsets into nested scenarios.

mod checker;
mod refnet;
mod select;
mod strength;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use checker::{InteractionChecker, ScenarioMatch, PRESENCE_THRESHOLD};
pub use refnet::{fit_refnet, LossTrace, RefNet, RefNetConfig};
pub use select::{
    elbow_cuts, elbow_sets, scenarios_from_sets, select_interactions, InteractionEntry, Scenario, SelectionMode,
    MIN_GAP_FRACTION,
};
pub use strength::{interaction_strength, mixed_partial, probe_rows, subsets};

use crate::data::Dataset;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisConfig {
    pub net: RefNetConfig,
    pub probes: usize,
    /// Finite-difference step in standardized input units.
    pub step: f64,
    pub max_order: usize,
    pub selection: SelectionMode,
}

impl Default for VisConfig {
    fn default() -> Self {
        Self {
            net: RefNetConfig::default(),
            probes: 1000,
            step: 0.05,
            max_order: 4,
            selection: SelectionMode::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub variables: Vec<String>,
    /// Sorted by descending strength.
    pub entries: Vec<InteractionEntry>,
    pub scenarios: Vec<Scenario>,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub epochs: usize,
}

impl InteractionReport {
    pub fn strength_of(&self, vars: &[&str]) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.variables.len() == vars.len() && vars.iter().all(|v| e.variables.iter().any(|w| w == v)))
            .map(|e| e.strength)
    }

    /// Strongest single-variable entry.
    pub fn top_singleton(&self) -> Option<&InteractionEntry> {
        self.entries.iter().find(|e| e.variables.len() == 1)
    }

    /// Scenario `number`, counting from 1.
    pub fn scenario(&self, number: usize) -> Option<&Scenario> {
        number.checked_sub(1).and_then(|i| self.scenarios.get(i))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Two columns, `subset` and `log_strength`, for elbow plots.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["subset", "log_strength"])?;
        for e in &self.entries {
            w.write_record([e.label(), format!("{:?}", e.log_strength)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores all subsets of the dataset's variables with an already fitted network.
pub fn score_subsets(net: &RefNet, data: &Dataset, cfg: &VisConfig) -> Vec<InteractionEntry> {
    let rows = probe_rows(data, cfg.probes, cfg.net.seed);
    let mut entries: Vec<InteractionEntry> = subsets(data.n_features(), cfg.max_order)
        .into_iter()
        .map(|s| {
            let psi = interaction_strength(net, &s, data, &rows, cfg.step);
            InteractionEntry::new(s.iter().map(|&i| data.names()[i].clone()).collect(), psi)
        })
        .collect();
    entries.sort_by(|a, b| b.strength.total_cmp(&a.strength));
    entries
}

/// Fits the reference network and builds the full report.
pub fn run_vis(data: &Dataset, cfg: &VisConfig) -> Result<(InteractionReport, RefNet, LossTrace)> {
    let (net, trace) = fit_refnet(data, &cfg.net)?;
    let entries = score_subsets(&net, data, cfg);
    let scenarios = select_interactions(&entries, &cfg.selection);
    let report = InteractionReport {
        variables: data.names().to_vec(),
        entries,
        scenarios,
        train_mse: trace.train.last().copied().unwrap_or(f64::NAN),
        validation_mse: trace.validation.last().copied().unwrap_or(f64::NAN),
        epochs: cfg.net.epochs,
    };
    Ok((report, net, trace))
}
