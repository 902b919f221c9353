//! Recurrent expression sampler and its risk-seeking trainer.

mod checkpoint;
mod lstm;
mod sampler;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use lstm::{masked_softmax, PolicyNet, PolicyShape, StepCache};
pub use sampler::{replay, sample_batch, sample_one, Rollout};
pub use train::{
    accumulate_gradient, log_prob_gradient, risk_quantile, risk_seeking_gradient, train_step, Adam, TrainConfig,
    TrainDiagnostics,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{SamplingConstraint, TokenPool, TokenSpec, BinaryOp};

    fn tiny_pool() -> TokenPool {
        TokenPool::new(
            vec![TokenSpec::binary(BinaryOp::Add), TokenSpec::variable("x"), TokenSpec::variable("y")],
            vec![SamplingConstraint::LengthRange { min: 1, max: 7 }],
        )
        .unwrap()
    }

    fn krauss_like_pool() -> TokenPool {
        let mut tokens: Vec<TokenSpec> = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Min]
            .into_iter()
            .map(TokenSpec::binary)
            .collect();
        tokens.extend(["v_f", "v_l", "ds", "s_f"].map(TokenSpec::variable));
        tokens.push(TokenSpec::parameter("a_max", 2.6));
        tokens.push(TokenSpec::parameter("b", 4.5));
        TokenPool::new(
            tokens,
            vec![
                SamplingConstraint::MaxOccurrences { token: "min".into(), max: 1 },
                SamplingConstraint::MustBeFirst { token: "min".into() },
                SamplingConstraint::LengthRange { min: 10, max: 40 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn finite_difference_gradient() {
        let pool = tiny_pool();
        let shape = PolicyShape { hidden: 4, n_tokens: 3 };
        let net = PolicyNet::new(shape, 5);
        let tokens = vec![0, 0, 1, 2, 1];
        let ro = replay(&net, &pool, &tokens).unwrap();
        let analytic = log_prob_gradient(&net, &ro);
        let mut worst: f64 = 0.0;
        for i in 0..net.params().len() {
            let h = 1e-5;
            let mut up = net.clone();
            up.params_mut()[i] += h;
            let mut down = net.clone();
            down.params_mut()[i] -= h;
            let fd = (replay(&up, &pool, &tokens).unwrap().log_prob - replay(&down, &pool, &tokens).unwrap().log_prob)
                / (2.0 * h);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let pool = tiny_pool();
        let net = PolicyNet::new(PolicyShape { hidden: 4, n_tokens: 3 }, 9);
        let tokens = vec![0, 1, 2];
        let ro = replay(&net, &pool, &tokens).unwrap();
        let mut g = vec![0.0; net.params().len()];
        accumulate_gradient(&net, &ro, 0.0, 1.0, &mut g);
        for i in (0..net.params().len()).step_by(7) {
            let h = 1e-5;
            let mut up = net.clone();
            up.params_mut()[i] += h;
            let mut down = net.clone();
            down.params_mut()[i] -= h;
            let fd = (replay(&up, &pool, &tokens).unwrap().entropy() - replay(&down, &pool, &tokens).unwrap().entropy())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 + 1e-4 * fd.abs(), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn probabilities_are_masked_and_normalized() {
        let pool = krauss_like_pool();
        let net = PolicyNet::new(PolicyShape { hidden: 8, n_tokens: pool.len() }, 1);
        for ro in sample_batch(&net, &pool, 50, 3) {
            assert_eq!(ro.tokens[0], pool.index_of("min").unwrap());
            assert!(pool.validate(&ro.tokens).is_ok());
            let mut state = crate::expr::PrefixState::new(&pool);
            for (p, &t) in ro.step_probs().iter().zip(&ro.tokens) {
                let mask = pool.mask(&state);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(p.iter().zip(&mask).all(|(v, m)| *m || *v == 0.0));
                state.push(&pool, t);
            }
        }
    }

    #[test]
    fn single_terminal_pool() {
        let pool = TokenPool::new(vec![TokenSpec::variable("x")], vec![]).unwrap();
        let net = PolicyNet::new(PolicyShape { hidden: 4, n_tokens: 1 }, 0);
        for ro in sample_batch(&net, &pool, 5, 0) {
            assert_eq!(ro.tokens, vec![0]);
            assert_eq!(ro.log_prob, 0.0);
        }
    }

    #[test]
    fn batches_are_deterministic() {
        let pool = krauss_like_pool();
        let net = PolicyNet::new(PolicyShape { hidden: 32, n_tokens: pool.len() }, 2);
        let a: Vec<_> = sample_batch(&net, &pool, 300, 17).into_iter().map(|r| r.tokens).collect();
        let b: Vec<_> = sample_batch(&net, &pool, 300, 17).into_iter().map(|r| r.tokens).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn equal_rewards_leave_weights_unchanged() {
        let pool = tiny_pool();
        let mut net = PolicyNet::new(PolicyShape { hidden: 4, n_tokens: 3 }, 4);
        let before = net.clone();
        let batch = sample_batch(&net, &pool, 20, 1);
        let refs: Vec<&Rollout> = batch.iter().collect();
        let mut adam = Adam::new(net.params().len());
        let d = train_step(&mut net, &mut adam, &refs, &[0.5; 20], &TrainConfig::default());
        assert!(!d.updated);
        assert_eq!(net, before);
    }

    #[test]
    fn sub_quantile_samples_contribute_nothing() {
        let pool = tiny_pool();
        let net = PolicyNet::new(PolicyShape { hidden: 4, n_tokens: 3 }, 6);
        let batch = sample_batch(&net, &pool, 20, 2);
        let refs: Vec<&Rollout> = batch.iter().collect();
        let mut rewards: Vec<f64> = (0..20).map(|i| i as f64 / 100.0).collect();
        rewards[7] = 1.0;
        let cfg = TrainConfig { entropy_weight: 0.0, ..Default::default() };
        let (g, d) = risk_seeking_gradient(&net, &refs, &rewards, &cfg);
        assert_eq!(d.selected, 1);
        let q = d.quantile;
        let expect: Vec<f64> = log_prob_gradient(&net, &batch[7]).iter().map(|v| v * (1.0 - q)).collect();
        assert!(g.iter().zip(&expect).all(|(a, b)| (a - b).abs() <= 1e-15 * (1.0 + b.abs())));
        // changing sub-quantile rewards does not change the gradient
        let mut other = rewards.clone();
        other[0] = 0.1;
        other[3] = 0.0;
        assert_eq!(risk_seeking_gradient(&net, &refs, &other, &cfg).0, g);
    }

    #[test]
    fn quantile_rule() {
        let r: Vec<f64> = (0..300).map(|i| i as f64).collect();
        assert!((risk_quantile(&r, 0.05) - 284.05).abs() < 1e-9);
        assert!((risk_quantile(&[1.0, 2.0], 0.05) - 1.95).abs() < 1e-12);
        assert_eq!(risk_quantile(&[3.0; 5], 0.05), 3.0);
    }

    #[test]
    fn training_raises_mean_reward() {
        let pool = tiny_pool();
        let score = |t: &[usize]| {
            let x = t.iter().filter(|&&k| k == 1).count() as f64;
            let y = t.iter().filter(|&&k| k == 2).count() as f64;
            (x - y) / t.len() as f64 + 0.01 * t.len() as f64
        };
        let mut net = PolicyNet::new(PolicyShape { hidden: 8, n_tokens: 3 }, 3);
        let mut adam = Adam::new(net.params().len());
        let cfg = TrainConfig { lr: 0.03, entropy_weight: 0.0, ..Default::default() };
        let mean = |net: &PolicyNet| {
            let b = sample_batch(net, &pool, 500, 99);
            b.iter().map(|r| score(&r.tokens)).sum::<f64>() / 500.0
        };
        let before = mean(&net);
        for epoch in 0..150 {
            let batch = sample_batch(&net, &pool, 100, epoch);
            let refs: Vec<&Rollout> = batch.iter().collect();
            // tiny index term breaks ties so the top tail is never flat
            let rewards: Vec<f64> = batch.iter().enumerate().map(|(i, r)| score(&r.tokens) + 1e-9 * i as f64).collect();
            train_step(&mut net, &mut adam, &refs, &rewards, &cfg);
        }
        let after = mean(&net);
        assert!(after > before + 0.1, "{before} -> {after}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.ckpt");
        let net = PolicyNet::new(PolicyShape { hidden: 4, n_tokens: 3 }, 8);
        let mut adam = Adam::new(net.params().len());
        adam.t = 3;
        adam.m[0] = 0.25;
        save_checkpoint(&path, &net, Some(&adam)).unwrap();
        let (back, back_adam) = load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(back_adam.unwrap(), adam);
    }
}
