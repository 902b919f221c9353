//! Experiment grids: penalty-weight sweep, scenario sweep, noise sweep and
//! the two stimulus-response models.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::FileConfig;
use super::default_pool;
use crate::error::Result;
use crate::rng;
use crate::search::{best_expression_table, run_matrix, summarize, write_matrix_csv, CellResult, MatrixSpec, Method, SummaryRow};
use crate::traffic::{add_noise, generate_dataset, target_expression, CarFollowingModel, NoiseSpec};
use crate::vis::{run_vis, InteractionReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    BetaSweep,
    ScenarioSweep,
    NoiseSweep,
    Gm,
    Ghr,
}

const BETAS: [f64; 9] = [0.0, 0.05, 0.10, 0.15, 0.20, 0.40, 0.60, 0.80, 1.0];

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::BetaSweep,
        Experiment::ScenarioSweep,
        Experiment::NoiseSweep,
        Experiment::Gm,
        Experiment::Ghr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BetaSweep => "beta-sweep",
            Experiment::ScenarioSweep => "scenario-sweep",
            Experiment::NoiseSweep => "noise-sweep",
            Experiment::Gm => "gm",
            Experiment::Ghr => "ghr",
        }
    }

    pub fn model(self) -> CarFollowingModel {
        match self {
            Experiment::Gm => CarFollowingModel::GM_DEFAULT,
            Experiment::Ghr => CarFollowingModel::GHR_DEFAULT,
            _ => CarFollowingModel::Krauss,
        }
    }

    /// The grid, given how many scenarios the interaction report offers.
    pub fn spec(self, config: &FileConfig, seed: u64, n_scenarios: usize) -> MatrixSpec {
        let noise_grid: Vec<f64> = (0..=10).map(|i| i as f64 / 100.0).collect();
        let (methods, betas, scenarios, noise_levels) = match self {
            Experiment::BetaSweep => (vec![Method::DsrGp, Method::VisDsrGp], BETAS.to_vec(), vec![1], vec![0.0]),
            Experiment::ScenarioSweep => (
                vec![Method::DsrGp, Method::VisDsrGp],
                vec![0.15],
                (1..=n_scenarios.clamp(1, 4)).collect(),
                vec![0.0],
            ),
            Experiment::NoiseSweep => (Method::ALL.to_vec(), vec![0.15], vec![1], noise_grid),
            Experiment::Gm | Experiment::Ghr => (vec![Method::VisDsrGp], vec![0.15], vec![1], noise_grid),
        };
        let mut base = config.search.clone();
        base.max_epochs = config.reproduce.scaled_epochs();
        let n = config.reproduce.scaled_seeds() as u64;
        MatrixSpec {
            methods,
            betas,
            scenarios,
            noise_levels,
            seeds: (seed..seed + n).collect(),
            base,
        }
    }
}

pub struct ExperimentOutput {
    pub cells: Vec<CellResult>,
    pub summary: Vec<SummaryRow>,
    /// Markdown table of the best expression per noise level and method.
    pub best_table: String,
    pub vis: InteractionReport,
    pub files: Vec<PathBuf>,
}

/// Generates the data, runs the interaction detector unless `vis` is
/// given, runs the grid and writes its tables into `dir`.
pub fn run_experiment(
    exp: Experiment,
    config: &FileConfig,
    seed: u64,
    vis: Option<InteractionReport>,
    dir: &Path,
) -> Result<ExperimentOutput> {
    let model = exp.model();
    let mut g = config.generate.clone();
    if g.model.name() != model.name() {
        g.model = model;
    }
    g.seed = seed;
    let clean = generate_dataset(&g)?;
    let vis = match vis {
        Some(v) => v,
        None => {
            let mut v = config.vis.clone();
            v.net.seed = seed;
            run_vis(&clean, &v)?.0
        }
    };
    let spec = exp.spec(config, seed, vis.scenarios.len());
    let datasets = spec
        .noise_levels
        .iter()
        .enumerate()
        .map(|(i, &level)| add_noise(&clean, &NoiseSpec::new(level, rng::derive_seed(seed, "reproduce-noise", i as u64))))
        .collect::<Result<Vec<_>>>()?;
    let target = target_expression(g.model);
    log::info!("{}: {} noise levels, {} seeds", exp.name(), spec.noise_levels.len(), spec.seeds.len());
    let cells = run_matrix(&spec, &datasets, |m| default_pool(model, m), &vis.scenarios, Some(&target))?;
    let summary = summarize(&cells);
    let best_table = best_expression_table(&cells);

    let mut files = Vec::new();
    let matrix = dir.join("matrix.csv");
    write_matrix_csv(&cells, &matrix)?;
    files.push(matrix);
    let summary_path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    for row in &summary {
        w.serialize(row)?;
    }
    w.flush()?;
    files.push(summary_path);
    for (name, text) in [
        ("cells.json", serde_json::to_string_pretty(&cells)?),
        ("vis_report.json", vis.to_json()),
        ("best_expressions.md", best_table.clone()),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        files.push(p);
    }
    Ok(ExperimentOutput {
        cells,
        summary,
        best_table,
        vis,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shapes() {
        let mut c = FileConfig::default();
        c.reproduce.scale = 0.3;
        let s = Experiment::NoiseSweep.spec(&c, 7, 5);
        assert_eq!(s.noise_levels.len(), 11);
        assert_eq!(s.seeds, vec![7, 8, 9]);
        assert_eq!(s.base.max_epochs, 60);
        assert_eq!(Experiment::ScenarioSweep.spec(&c, 0, 6).scenarios, vec![1, 2, 3, 4]);
        assert_eq!(Experiment::BetaSweep.spec(&c, 0, 1).betas.len(), 9);
    }
}
