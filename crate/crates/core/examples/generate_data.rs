//! Simulate the three car-following models and write CSVs (with a 3% noisy copy).
//!
//! cargo run --release --example generate_data -- [out_dir]

use std::path::PathBuf;

use carfollow_sr::traffic::{add_noise, generate_dataset, CarFollowingModel, GenerateConfig, NoiseSpec};

fn main() -> carfollow_sr::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cfsr-out/data".into()));
    std::fs::create_dir_all(&out)?;
    for model in [CarFollowingModel::Krauss, CarFollowingModel::GM_DEFAULT, CarFollowingModel::GHR_DEFAULT] {
        let data = generate_dataset(&GenerateConfig::for_model(model, 0))?;
        let path = out.join(format!("{model}.csv"));
        data.write_csv(&path)?;
        data.write_sidecar(&path)?;
        let noisy = add_noise(&data, &NoiseSpec::new(0.03, 1))?;
        noisy.write_csv(&out.join(format!("{model}_noise3.csv")))?;
        println!("{model}: {} rows, features {:?} -> {}", data.n_rows(), data.names(), path.display());
    }
    Ok(())
}
