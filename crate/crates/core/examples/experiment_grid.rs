//! A small method × noise × seed grid on GM data, written to disk.
//! `cfsr reproduce` runs the full-size grids.
//!
//! cargo run --release --example experiment_grid -- [out_dir]

use std::path::PathBuf;

use carfollow_sr::search::{
    best_expression_table, gm_pool, run_matrix, summarize, write_matrix_csv, MatrixSpec, Method, SearchConfig,
};
use carfollow_sr::traffic::{add_noise, generate_dataset, target_expression, CarFollowingModel, GenerateConfig, NoiseSpec};

fn main() -> carfollow_sr::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cfsr-out/grid".into()));
    std::fs::create_dir_all(&out)?;
    let model = CarFollowingModel::GM_DEFAULT;
    let clean = generate_dataset(&GenerateConfig::for_model(model, 0))?;
    let noise_levels = vec![0.0, 0.03, 0.10];
    let datasets = noise_levels
        .iter()
        .enumerate()
        .map(|(i, &l)| if l == 0.0 { Ok(clean.clone()) } else { add_noise(&clean, &NoiseSpec::new(l, i as u64)) })
        .collect::<carfollow_sr::Result<Vec<_>>>()?;

    // desk-sized budget
    let mut base = SearchConfig { batch: 100, max_epochs: 10, ..SearchConfig::default() };
    if let Some(gp) = base.gp.as_mut() {
        gp.generations = 5;
        gp.elites = 10;
    }
    let spec = MatrixSpec {
        methods: vec![Method::DsrGp, Method::VisDsrGp],
        betas: vec![0.15],
        scenarios: vec![1],
        noise_levels,
        seeds: vec![1, 2],
        base,
    };
    let scenario: Vec<Vec<String>> = vec![vec!["v_f".into()], vec!["v_l".into()], vec!["v_f".into(), "v_l".into()]];
    let cells = run_matrix(&spec, &datasets, |_| gm_pool(), &[scenario], Some(&target_expression(model)))?;

    write_matrix_csv(&cells, &out.join("matrix.csv"))?;
    for row in summarize(&cells) {
        println!(
            "{:<11} noise {:>4}: epochs {:>5.1}  mpe {:.3}%",
            row.method.name(),
            row.noise,
            row.epochs_mean,
            row.mpe_mean.unwrap_or(f64::NAN)
        );
    }
    println!("\n{}", best_expression_table(&cells));
    println!("matrix written to {}", out.join("matrix.csv").display());
    Ok(())
}
