//! Rank variable interactions on Krauss data and print the recommended scenarios.

use carfollow_sr::traffic::{generate_dataset, GenerateConfig};
use carfollow_sr::vis::{run_vis, VisConfig};

fn main() -> carfollow_sr::Result<()> {
    let data = generate_dataset(&GenerateConfig::default())?;
    let (report, _net, trace) = run_vis(&data, &VisConfig::default())?;
    println!("reference net final loss: train {:.3e}", trace.train.last().copied().unwrap_or(f64::NAN));
    for e in report.entries.iter().take(8) {
        println!("{:>10.4e}  {}", e.strength, e.variables.join(" x "));
    }
    for (i, s) in report.scenarios.iter().enumerate() {
        let sets: Vec<String> = s.iter().map(|c| format!("({})", c.join(","))).collect();
        println!("scenario #{}: {}", i + 1, sets.join(" "));
    }
    Ok(())
}
