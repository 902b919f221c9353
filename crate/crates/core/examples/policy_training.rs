//! Train the sequence policy alone with the risk-seeking gradient on a toy
//! target `x*z*z + x - z`, no GP, no penalty.

use carfollow_sr::expr::{evaluate, BinaryOp, ExpressionTree, SamplingConstraint, TokenPool, TokenSpec};
use carfollow_sr::policy::{sample_batch, train_step, Adam, PolicyNet, PolicyShape, TrainConfig};
use carfollow_sr::reward::{combined_reward, nrmse};
use carfollow_sr::Dataset;

fn main() -> carfollow_sr::Result<()> {
    let xs: Vec<f64> = (0..200).map(|i| -2.0 + i as f64 * 0.02).collect();
    let zs: Vec<f64> = xs.iter().map(|x| (x * 1.3).cos()).collect();
    let target: Vec<f64> = xs.iter().zip(&zs).map(|(x, z)| x * z * z + x - z).collect();
    let data = Dataset::new(vec!["x".into(), "z".into()], vec![xs, zs], target)?;

    let pool = TokenPool::new(
        vec![
            TokenSpec::binary(BinaryOp::Add),
            TokenSpec::binary(BinaryOp::Sub),
            TokenSpec::binary(BinaryOp::Mul),
            TokenSpec::variable("x"),
            TokenSpec::variable("z"),
        ],
        vec![SamplingConstraint::LengthRange { min: 3, max: 11 }],
    )?;
    let mut net = PolicyNet::new(PolicyShape { hidden: 16, n_tokens: pool.len() }, 0);
    let mut adam = Adam::new(net.params().len());
    let cfg = TrainConfig { lr: 0.03, ..Default::default() };

    for epoch in 0..150 {
        let batch = sample_batch(&net, &pool, 200, epoch);
        let rewards: Vec<f64> = batch
            .iter()
            .map(|r| {
                let tree = ExpressionTree::from_indices(&pool, &r.tokens).expect("valid rollout");
                evaluate(&tree, &data)
                    .ok()
                    .and_then(|p| nrmse(&p, data.target()).ok())
                    .map_or(0.0, |e| combined_reward(e, 0.0))
            })
            .collect();
        let d = train_step(&mut net, &mut adam, &batch.iter().collect::<Vec<_>>(), &rewards, &cfg);
        if epoch % 25 == 0 || d.best_reward >= 1.0 - 1e-12 {
            let i = (0..rewards.len()).max_by(|&a, &b| rewards[a].total_cmp(&rewards[b])).unwrap();
            let best = ExpressionTree::from_indices(&pool, &batch[i].tokens)?;
            println!("epoch {epoch:>2}: mean {:.3} best {:.4} `{}`", d.mean_reward, d.best_reward, best.infix());
            if d.best_reward >= 1.0 - 1e-12 {
                break;
            }
        }
    }
    Ok(())
}
