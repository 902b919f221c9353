use std::sync::OnceLock;

use carfollow_sr::expr::{equivalent, evaluate, simplify, EquivalenceDomain, ExpressionTree, TokenPool};
use carfollow_sr::gp::random_sequence;
use carfollow_sr::policy::{sample_batch, PolicyNet, PolicyShape};
use carfollow_sr::reward::{combined_reward, norm_complexity, score, RewardConfig};
use carfollow_sr::rng;
use carfollow_sr::search::{gm_pool, krauss_pool};
use carfollow_sr::traffic::{generate_dataset, GenerateConfig};
use carfollow_sr::vis::{fit_refnet, interaction_strength, probe_rows, subsets, RefNet, RefNetConfig};
use carfollow_sr::Dataset;
use proptest::prelude::*;

fn data() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| {
        let full = generate_dataset(&GenerateConfig::default()).unwrap();
        full.select_rows(&(0..full.n_rows()).step_by(20).collect::<Vec<_>>())
    })
}

fn net() -> &'static RefNet {
    static N: OnceLock<RefNet> = OnceLock::new();
    N.get_or_init(|| {
        let cfg = RefNetConfig {
            epochs: 20,
            ..RefNetConfig::default()
        };
        fit_refnet(data(), &cfg).unwrap().0
    })
}

fn random_tree(pool: &TokenPool, seed: u64) -> ExpressionTree {
    let mut r = rng::stream(seed, "prop-tree", 0);
    ExpressionTree::from_indices(pool, &random_sequence(pool, &mut r)).unwrap()
}

#[test]
fn ten_thousand_masked_rollouts_are_valid() {
    for (i, pool) in [krauss_pool(true, (10, 40)), krauss_pool(false, (10, 40)), gm_pool()].iter().enumerate() {
        let shape = PolicyShape {
            hidden: 8,
            n_tokens: pool.len(),
        };
        let net = PolicyNet::new(shape, i as u64);
        let rollouts = sample_batch(&net, pool, 10_000 / 3 + 1, 42 + i as u64);
        for r in &rollouts {
            pool.validate(&r.tokens).unwrap();
            assert!(r.log_prob.is_finite() && r.log_prob <= 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simplify_keeps_values(seed in any::<u64>()) {
        let t = random_tree(&krauss_pool(false, (10, 40)), seed);
        let s = simplify(&t);
        prop_assert!(s.complexity() <= t.complexity());
        if let (Ok(a), Ok(b)) = (evaluate(&t, data()), evaluate(&s, data())) {
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()), "{} vs {}", t.infix(), s.infix());
            }
        }
    }

    #[test]
    fn evaluation_is_pure(seed in any::<u64>()) {
        let t = random_tree(&krauss_pool(true, (10, 40)), seed);
        let before = data().clone();
        let a = evaluate(&t, data());
        let b = evaluate(&t, data());
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
        prop_assert_eq!(&before, data());
    }

    #[test]
    fn equivalence_is_reflexive_and_symmetric(s1 in any::<u64>(), s2 in any::<u64>()) {
        let pool = krauss_pool(true, (10, 40));
        let domain = EquivalenceDomain::from_dataset(data(), 64, 0);
        let (a, b) = (random_tree(&pool, s1), random_tree(&pool, s2));
        if evaluate(&a, data()).is_ok() {
            prop_assert!(equivalent(&a, &a, 1e-2, Some(&domain)));
        }
        prop_assert_eq!(equivalent(&a, &b, 1e-2, Some(&domain)), equivalent(&b, &a, 1e-2, Some(&domain)));
    }

    #[test]
    fn reward_decreases_in_error_and_complexity(
        l1 in 0.0f64..10.0, dl in 1e-6f64..10.0, p in 10usize..40, dp in 1usize..10,
    ) {
        let n = norm_complexity(p, 10, 40);
        prop_assert!(combined_reward(l1 + dl, n) < combined_reward(l1, n));
        let n2 = norm_complexity(p + dp, 10, 40);
        prop_assert!(combined_reward(l1, n2) < combined_reward(l1, n));
    }

    #[test]
    fn reward_bounds(l in 0.0f64..100.0, p in 1usize..64, rec in any::<bool>(), epoch in 1usize..30, beta in 0.0f64..1.0) {
        let cfg = RewardConfig { beta, ..RewardConfig::default() };
        let b = score(l, p, rec, epoch, &cfg);
        prop_assert!(0.0 <= b.r && b.r <= b.r_c && b.r_c <= 1.0);
    }

    #[test]
    fn interaction_strength_is_non_negative(subset_index in 0usize..15, seed in any::<u64>()) {
        let all = subsets(4, 4);
        let rows = probe_rows(data(), 16, seed);
        let psi = interaction_strength(net(), &all[subset_index], data(), &rows, 0.05);
        prop_assert!(psi >= 0.0 && psi.is_finite());
    }
}
