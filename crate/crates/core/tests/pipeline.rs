//! Library-level flows across modules.

use carfollow_sr::expr::{evaluate, ExpressionTree};
use carfollow_sr::reward::nrmse;
use carfollow_sr::search::{krauss_pool, run_matrix, run_search, summarize, MatrixSpec, Method, SearchConfig};
use carfollow_sr::traffic::{add_noise, generate_dataset, target_expression, CarFollowingModel, GenerateConfig, NoiseSpec};
use carfollow_sr::vis::{run_vis, InteractionChecker, ScenarioMatch, VisConfig};

fn small_search(method: Method, seed: u64) -> SearchConfig {
    let scenario = vec![vec!["v_f".to_string()], vec!["ds".into(), "v_l".into(), "v_f".into()]];
    let mut cfg = SearchConfig::for_method(method, Some(scenario), seed);
    cfg.batch = 40;
    cfg.max_epochs = 2;
    if let Some(gp) = cfg.gp.as_mut() {
        gp.generations = 2;
        gp.elites = 5;
    }
    cfg
}

#[test]
fn target_scores_perfectly_and_checker_sees_its_interaction() {
    let data = generate_dataset(&GenerateConfig::default()).unwrap();
    let pool = krauss_pool(true, (10, 40));
    let t = ExpressionTree::parse_prefix("min + v_f a_max + v_l / * + b b ds + + v_f v_l + b b", Some(&pool)).unwrap();
    let e = nrmse(&evaluate(&t, &data).unwrap(), data.target()).unwrap();
    assert!(e < 1e-12);
    let checker = InteractionChecker::new(&data, 8, 0);
    let three = vec![vec!["ds".to_string(), "v_l".into(), "v_f".into()]];
    let additive = ExpressionTree::parse_prefix("min + v_f a_max + v_l / * ds b v_f", Some(&pool)).unwrap();
    assert!(!checker.has_recommended(&additive, &three, ScenarioMatch::Any));
    let safe = ExpressionTree::parse_prefix("/ * + b b ds + + v_f v_l + b b", Some(&pool)).unwrap();
    assert!(checker.has_recommended(&safe, &three, ScenarioMatch::Any));
}

#[test]
fn vis_then_search_on_noisy_data() {
    let clean = generate_dataset(&GenerateConfig::default()).unwrap();
    let noisy = add_noise(&clean, &NoiseSpec::new(0.03, 1)).unwrap();
    assert_eq!(noisy.clean_target(), clean.target());
    let mut vis = VisConfig::default();
    vis.net.epochs = 5;
    vis.probes = 100;
    let (report, _, trace) = run_vis(&noisy, &vis).unwrap();
    assert_eq!(report.entries.len(), 15);
    assert_eq!(trace.train.len(), 5);
    assert!(!report.scenarios.is_empty());
    let mut cfg = small_search(Method::VisDsrGp, 4);
    cfg.scenario = report.scenario(1).cloned();
    let target = target_expression(CarFollowingModel::Krauss);
    let r = run_search(&noisy, &krauss_pool(true, (10, 40)), &cfg, Some(&target)).unwrap();
    let best = r.best.unwrap();
    assert!(best.mpe.is_some_and(|m| m.is_finite()));
    assert!(best.nrmse.is_some());
}

#[test]
fn small_matrix() {
    let data = generate_dataset(&GenerateConfig {
        n_pairs: 100,
        ..GenerateConfig::default()
    })
    .unwrap();
    let spec = MatrixSpec {
        methods: Method::ALL.to_vec(),
        betas: vec![0.15],
        scenarios: vec![1, 2],
        noise_levels: vec![0.0],
        seeds: vec![1, 2],
        base: small_search(Method::Dsr, 0),
    };
    let scenarios = vec![vec![vec!["v_f".to_string()]]];
    let cells = run_matrix(&spec, &[data], |m| krauss_pool(m.structural_constraints(), (10, 40)), &scenarios, None).unwrap();
    // dsr and dsr-gp: 2 seeds each; vis-dsr-gp: 2 scenarios x 2 seeds
    assert_eq!(cells.len(), 8);
    let failed: Vec<_> = cells.iter().filter(|c| c.error.is_some()).collect();
    assert_eq!(failed.len(), 2, "scenario #2 does not exist");
    let summary = summarize(&cells);
    assert_eq!(summary.len(), 4);
}
