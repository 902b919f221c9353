//! Search for the Krauss law with each method and compare the outcomes.
//!
//! cargo run --release --example search_krauss -- [epochs] [seed]

use carfollow_sr::search::{krauss_pool, run_search, Method, SearchConfig};
use carfollow_sr::traffic::{generate_dataset, target_expression, CarFollowingModel, GenerateConfig};

fn main() -> carfollow_sr::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(60, |a| a.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(1, |a| a.parse().expect("seed"));
    let data = generate_dataset(&GenerateConfig::default())?;
    let target = target_expression(CarFollowingModel::Krauss);
    let scenario: Vec<Vec<String>> = [&["v_f"][..], &["v_l"], &["ds"], &["ds", "v_l", "v_f"]]
        .iter()
        .map(|s| s.iter().map(|v| v.to_string()).collect())
        .collect();
    for method in Method::ALL {
        let pool = krauss_pool(method.structural_constraints(), (10, 40));
        let mut cfg = SearchConfig::for_method(method, Some(scenario.clone()), seed);
        cfg.max_epochs = epochs;
        let r = run_search(&data, &pool, &cfg, Some(&target))?;
        let b = r.best.expect("at least one epoch");
        println!(
            "{:<11} {:>3} epochs {:>6.1}s  nrmse {:.4}  mpe {:.2}%  recovered {:?}  {}",
            method.name(),
            r.epochs_run,
            r.seconds,
            b.nrmse.unwrap_or(f64::NAN),
            b.mpe.unwrap_or(f64::NAN),
            r.recovered,
            b.infix
        );
    }
    Ok(())
}
