use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rand::seq::index::sample;
use rayon::prelude::*;

use super::SearchConfig;
use crate::constopt::{fitted_tree, ConstFitConfig};
use crate::data::Dataset;
use crate::error::Result;
use crate::expr::{evaluate, ExpressionTree, TokenPool};
use crate::reward::{nrmse, penalty_active, score, RewardBreakdown, RewardConfig};
use crate::rng;
use crate::vis::{InteractionChecker, Scenario, ScenarioMatch};

/// Entries kept before the memo table is flushed.
const CACHE_LIMIT: usize = 200_000;

/// A fitted candidate. `tree` is `None` and `l_e` infinite when the
/// expression cannot be evaluated.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub tokens: Vec<usize>,
    pub tree: Option<ExpressionTree>,
    pub l_e: f64,
    pub complexity: usize,
}

struct Entry {
    candidate: Candidate,
    recommended: OnceLock<bool>,
}

/// Fits, checks and scores token sequences, memoizing by sequence.
pub struct Evaluator<'a> {
    pool: &'a TokenPool,
    full: &'a Dataset,
    fit: Dataset,
    checker: Option<InteractionChecker>,
    scenario: Option<Scenario>,
    scenario_match: ScenarioMatch,
    reward: RewardConfig,
    const_fit: ConstFitConfig,
    cache: Mutex<HashMap<Vec<usize>, Arc<Entry>>>,
    checks: AtomicUsize,
}

impl<'a> Evaluator<'a> {
    pub fn new(data: &'a Dataset, pool: &'a TokenPool, cfg: &SearchConfig) -> Result<Self> {
        let fit = match cfg.fit_rows {
            Some(k) if k < data.n_rows() => {
                let mut r = rng::stream(cfg.seed, "search-fit-rows", 0);
                let mut rows = sample(&mut r, data.n_rows(), k).into_vec();
                rows.sort_unstable();
                data.select_rows(&rows)
            }
            _ => data.clone(),
        };
        let checker = (cfg.reward.beta > 0.0).then(|| InteractionChecker::new(data, cfg.checker_probes, cfg.seed));
        Ok(Self {
            pool,
            full: data,
            fit,
            checker,
            scenario: cfg.scenario.clone(),
            scenario_match: cfg.scenario_match,
            reward: cfg.reward.clone(),
            const_fit: ConstFitConfig {
                seed: cfg.seed,
                ..cfg.const_fit.clone()
            },
            cache: Mutex::new(HashMap::new()),
            checks: AtomicUsize::new(0),
        })
    }

    fn entry(&self, tokens: &[usize]) -> Arc<Entry> {
        if let Some(e) = self.cache.lock().expect("cache lock").get(tokens) {
            return e.clone();
        }
        let fitted = ExpressionTree::from_indices(self.pool, tokens)
            .ok()
            .and_then(|t| fitted_tree(&t, &self.fit, &self.const_fit).ok());
        let candidate = match fitted {
            Some((tree, fit)) if fit.l_e.is_finite() => Candidate {
                tokens: tokens.to_vec(),
                tree: Some(tree),
                l_e: fit.l_e,
                complexity: tokens.len(),
            },
            _ => Candidate {
                tokens: tokens.to_vec(),
                tree: None,
                l_e: f64::INFINITY,
                complexity: tokens.len(),
            },
        };
        let e = Arc::new(Entry {
            candidate,
            recommended: OnceLock::new(),
        });
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.entry(tokens.to_vec()).or_insert(e).clone()
    }

    fn recommended(&self, e: &Entry) -> bool {
        *e.recommended.get_or_init(|| match (&self.checker, &self.scenario, &e.candidate.tree) {
            (Some(checker), Some(s), Some(tree)) => {
                self.checks.fetch_add(1, Ordering::Relaxed);
                checker.has_recommended(tree, s, self.scenario_match)
            }
            _ => false,
        })
    }

    /// Distinct candidates the interaction checker has examined.
    pub fn interaction_checks(&self) -> usize {
        self.checks.load(Ordering::Relaxed)
    }

    /// Candidate and reward breakdown at `epoch`. The interaction checker
    /// runs only while the penalty is active.
    pub fn score(&self, tokens: &[usize], epoch: usize) -> (Candidate, RewardBreakdown) {
        let e = self.entry(tokens);
        let c = &e.candidate;
        if !c.l_e.is_finite() {
            return (c.clone(), RewardBreakdown::invalid());
        }
        let rec = penalty_active(epoch, &self.reward) && self.recommended(&e);
        (c.clone(), score(c.l_e, c.complexity, rec, epoch, &self.reward))
    }

    pub fn score_batch(&self, batch: &[&[usize]], epoch: usize) -> Vec<(Candidate, RewardBreakdown)> {
        batch.par_iter().map(|t| self.score(t, epoch)).collect()
    }

    /// NRMSE against the full target and MPE against the clean target.
    pub fn full_metrics(&self, tree: &ExpressionTree) -> (Option<f64>, Option<f64>) {
        match evaluate(tree, self.full) {
            Ok(pred) => (
                nrmse(&pred, self.full.target()).ok().filter(|e| e.is_finite()),
                mpe(&pred, self.full.clean_target()),
            ),
            Err(_) => (None, None),
        }
    }
}

/// Mean of `|y − f| / |y|` in percent over rows with a non-zero clean
/// target. `None` if no such row exists or a prediction is not finite.
pub fn mpe(pred: &[f64], clean: &[f64]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, y) in pred.iter().zip(clean) {
        if !p.is_finite() {
            return None;
        }
        if y.abs() > 1e-9 {
            sum += (y - p).abs() / y.abs();
            n += 1;
        }
    }
    (n > 0).then(|| 100.0 * sum / n as f64)
}
