//! Evolve random token sequences toward the GM law with the GP operators.

use carfollow_sr::expr::{evaluate, ExpressionTree};
use carfollow_sr::gp::{evolve, random_sequence, GpConfig, Individual};
use carfollow_sr::reward::{combined_reward, nrmse};
use carfollow_sr::rng;
use carfollow_sr::search::krauss_pool;
use carfollow_sr::traffic::{generate_dataset, CarFollowingModel, GenerateConfig};

fn main() -> carfollow_sr::Result<()> {
    let data = generate_dataset(&GenerateConfig { n_pairs: 100, ..GenerateConfig::for_model(CarFollowingModel::GM_DEFAULT, 0) })?;
    let pool = krauss_pool(false, (3, 15));
    let fitness = |tokens: &[usize]| -> f64 {
        let Ok(tree) = ExpressionTree::from_indices(&pool, tokens) else { return 0.0 };
        evaluate(&tree, &data)
            .ok()
            .and_then(|p| nrmse(&p, data.target()).ok())
            .map_or(0.0, |e| combined_reward(e, 0.0))
    };
    let mut r = rng::stream(3, "example-gp", 0);
    let seed: Vec<Individual> = (0..300)
        .map(|_| {
            let tokens = random_sequence(&pool, &mut r);
            let reward = fitness(&tokens);
            Individual { tokens, reward }
        })
        .collect();
    println!("best random reward {:.4}", seed.iter().map(|i| i.reward).fold(0.0, f64::max));
    let cfg = GpConfig { generations: 40, elites: 5, ..Default::default() };
    for ind in evolve(seed, &pool, fitness, &cfg, 3) {
        println!("{:.4}  {}", ind.reward, ExpressionTree::from_indices(&pool, &ind.tokens)?.infix());
    }
    Ok(())
}
