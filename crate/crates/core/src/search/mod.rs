//! The search loop: sample a batch from the policy, fit and score every
//! candidate, optionally evolve the batch with GP, and take a risk-seeking
//! policy-gradient step. Stops on convergence or after `max_epochs`.

mod evaluate;
mod matrix;
mod pools;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use evaluate::{mpe, Candidate, Evaluator};
pub use matrix::{
    best_expression_table, run_matrix, summarize, write_matrix_csv, CellResult, MatrixSpec, SummaryRow,
};
pub use pools::{ghr_pool, gm_pool, krauss_pool, response_pool};

use crate::constopt::ConstFitConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expr::{equivalent, EquivalenceDomain, ExpressionTree, TokenPool, DEFAULT_PROBE_POINTS};
use crate::gp::{evolve, GpConfig, Individual};
use crate::policy::{replay, sample_batch, train_step, Adam, PolicyNet, PolicyShape, Rollout, TrainConfig};
use crate::reward::RewardConfig;
use crate::rng;
use crate::vis::{Scenario, ScenarioMatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Policy only, no GP, no interaction penalty, length constraint only.
    Dsr,
    /// Policy with GP assistance, no interaction penalty.
    DsrGp,
    /// Policy with GP assistance and the interaction penalty.
    VisDsrGp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dsr, Method::DsrGp, Method::VisDsrGp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dsr => "dsr",
            Method::DsrGp => "dsr-gp",
            Method::VisDsrGp => "vis-dsr-gp",
        }
    }

    /// Whether the method's pool carries the structural constraints
    /// (leading, single `min`) in addition to the length range.
    pub fn structural_constraints(self) -> bool {
        self != Method::Dsr
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown method `{s}` (expected dsr, dsr-gp or vis-dsr-gp)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceRule {
    /// Epochs without a best-reward gain above `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
    /// Full-data NRMSE at or below which the search stops.
    pub nrmse_tol: f64,
    /// Tolerance handed to `equivalent` when a target is known.
    pub equivalence_tol: f64,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        Self {
            patience: 50,
            min_improvement: 1e-4,
            nrmse_tol: 1e-6,
            equivalence_tol: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub batch: usize,
    pub max_epochs: usize,
    pub hidden: usize,
    pub reward: RewardConfig,
    pub train: TrainConfig,
    pub gp: Option<GpConfig>,
    /// Recommended combinations; required when `reward.beta > 0`.
    pub scenario: Option<Scenario>,
    pub scenario_match: ScenarioMatch,
    pub checker_probes: usize,
    pub const_fit: ConstFitConfig,
    /// Fit and score candidates on this many rows (sampled once per run);
    /// `None` uses every row.
    pub fit_rows: Option<usize>,
    /// Candidates whose error lies within this relative margin of the most
    /// accurate one compete on length when picking the reported best.
    pub accuracy_margin: f64,
    pub convergence: ConvergenceRule,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            batch: 300,
            max_epochs: 200,
            hidden: 32,
            reward: RewardConfig::default(),
            train: TrainConfig::default(),
            gp: Some(GpConfig::default()),
            scenario: None,
            scenario_match: ScenarioMatch::Any,
            checker_probes: 8,
            const_fit: ConstFitConfig {
                max_starts: 4,
                max_evals: 100,
                ..ConstFitConfig::default()
            },
            fit_rows: Some(600),
            accuracy_margin: 1e-3,
            convergence: ConvergenceRule::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    /// Settings for one of the three compared methods. `scenario` is only
    /// used by [`Method::VisDsrGp`].
    pub fn for_method(method: Method, scenario: Option<Scenario>, seed: u64) -> Self {
        let mut cfg = Self { seed, ..Self::default() };
        cfg.apply_method(method, scenario);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if let Some(gp) = &self.gp {
            gp.validate()?;
            if gp.elites > self.batch {
                return Err(Error::config("GP elite count exceeds the batch size"));
            }
        }
        if self.batch == 0 || self.hidden == 0 {
            return Err(Error::config("batch and hidden size must be positive"));
        }
        if self.reward.beta > 0.0 && self.scenario.as_ref().is_none_or(|s| s.is_empty()) {
            return Err(Error::config("a positive beta needs a non-empty recommended scenario"));
        }
        if !(self.train.risk_eps > 0.0 && self.train.risk_eps <= 1.0) {
            return Err(Error::config("risk_eps must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub mean_reward: f64,
    pub batch_best_reward: f64,
    /// Reward quantile used by the risk-seeking filter.
    pub quantile: f64,
    pub best_reward_so_far: f64,
    /// Candidate count by complexity over the sampled batch.
    pub complexity: BTreeMap<usize, usize>,
    pub penalty_fraction: f64,
    pub invalid_fraction: f64,
    pub gp_best_reward: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestExpression {
    pub preorder: Vec<String>,
    pub prefix: String,
    pub infix: String,
    pub constants: BTreeMap<usize, f64>,
    pub tree: ExpressionTree,
    pub complexity: usize,
    /// Error on the rows used for fitting.
    pub fit_nrmse: f64,
    /// Error against the full (possibly noisy) target; `None` when the
    /// expression is not finite on every row.
    pub nrmse: Option<f64>,
    /// Mean percentage error against the clean target, if finite.
    pub mpe: Option<f64>,
    pub reward: f64,
    pub epoch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub seed: u64,
    pub epochs_run: usize,
    /// Epoch (1-based) at which the convergence rule fired.
    pub converged_epoch: Option<usize>,
    pub recovered: Option<bool>,
    /// Most accurate candidate (shorter ones win within the accuracy margin).
    pub best: Option<BestExpression>,
    /// Highest-reward candidate.
    pub best_by_reward: Option<BestExpression>,
    pub trace: Vec<EpochTrace>,
    /// Complexity of every sampled candidate over the run.
    pub explored_complexity: BTreeMap<usize, usize>,
    /// Distinct candidates passed to the interaction checker.
    pub interaction_checks: usize,
    pub seconds: f64,
}

impl SearchReport {
    /// Epochs until convergence, or the epochs run when the rule never fired.
    pub fn epochs_to_converge(&self) -> usize {
        self.converged_epoch.unwrap_or(self.epochs_run)
    }

    pub fn median_explored_complexity(&self) -> Option<usize> {
        let total: usize = self.explored_complexity.values().sum();
        let mut seen = 0;
        for (&c, &n) in &self.explored_complexity {
            seen += n;
            if 2 * seen >= total {
                return Some(c);
            }
        }
        None
    }

    /// The report with every wall-clock field zeroed.
    pub fn without_timing(&self) -> SearchReport {
        let mut r = self.clone();
        r.seconds = 0.0;
        for t in &mut r.trace {
            t.seconds = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON of [`Self::without_timing`], for byte comparison across runs.
    pub fn canonical_json(&self) -> String {
        self.without_timing().to_json()
    }

    /// The per-epoch trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|t| serde_json::to_string(t).expect("trace serializes") + "\n")
            .collect()
    }
}

/// Bounded list of the most accurate distinct candidates.
struct AccuracyBoard {
    entries: Vec<(Candidate, usize)>,
    capacity: usize,
    margin: f64,
}

impl AccuracyBoard {
    fn new(capacity: usize, margin: f64) -> Self {
        Self {
            entries: Vec::new(),
            capacity,
            margin,
        }
    }

    fn offer(&mut self, c: &Candidate, epoch: usize) {
        if !c.l_e.is_finite() || self.entries.iter().any(|(e, _)| e.tokens == c.tokens) {
            return;
        }
        if self.entries.len() == self.capacity && self.entries.last().is_some_and(|(e, _)| e.l_e <= c.l_e) {
            return;
        }
        let pos = self.entries.partition_point(|(e, _)| (e.l_e, e.complexity, &e.tokens) <= (c.l_e, c.complexity, &c.tokens));
        self.entries.insert(pos, (c.clone(), epoch));
        self.entries.truncate(self.capacity);
    }

    /// Shortest candidate whose error is within the margin of the lowest.
    fn pick(&self) -> Option<&(Candidate, usize)> {
        let floor = self.entries.first()?.0.l_e;
        let limit = floor * (1.0 + self.margin) + 1e-12;
        self.entries
            .iter()
            .filter(|(c, _)| c.l_e <= limit)
            .min_by(|(a, _), (b, _)| a.complexity.cmp(&b.complexity).then(a.l_e.total_cmp(&b.l_e)))
    }
}

struct RewardBest {
    candidate: Candidate,
    reward: f64,
    epoch: usize,
}

fn describe(ev: &Evaluator, c: &Candidate, reward: f64, epoch: usize) -> Option<BestExpression> {
    let tree = c.tree.clone()?;
    let (nrmse, mpe) = ev.full_metrics(&tree);
    Some(BestExpression {
        preorder: tree.preorder().iter().map(|n| n.name()).collect(),
        prefix: tree.to_prefix_string(),
        infix: tree.infix(),
        constants: tree.constants().clone(),
        complexity: c.complexity,
        fit_nrmse: c.l_e,
        nrmse,
        mpe,
        reward,
        epoch,
        tree,
    })
}

/// Runs the search on `data` with `pool`. When `target` is given, the run
/// stops as soon as the reported best is equivalent to it.
pub fn run_search(data: &Dataset, pool: &TokenPool, cfg: &SearchConfig, target: Option<&ExpressionTree>) -> Result<SearchReport> {
    cfg.validate()?;
    for v in pool.variable_names() {
        if data.feature_index(v).is_none() {
            return Err(Error::config(format!("pool variable `{v}` is not a dataset column")));
        }
    }
    let start = Instant::now();
    let ev = Evaluator::new(data, pool, cfg)?;
    let domain = target.map(|_| EquivalenceDomain::from_dataset(data, DEFAULT_PROBE_POINTS, cfg.seed));
    let shape = PolicyShape {
        hidden: cfg.hidden,
        n_tokens: pool.len(),
    };
    let mut net = PolicyNet::new(shape, rng::derive_seed(cfg.seed, "search-policy", 0));
    let mut adam = Adam::new(net.params().len());
    let mut board = AccuracyBoard::new(64, cfg.accuracy_margin);
    let mut reward_best: Option<RewardBest> = None;
    let mut trace = Vec::new();
    let mut explored = BTreeMap::new();
    let mut converged_epoch = None;
    let mut recovered = target.map(|_| false);
    let mut stale = 0usize;
    let mut last_best = f64::NEG_INFINITY;

    for epoch in 1..=cfg.max_epochs {
        let t0 = Instant::now();
        let rollouts = sample_batch(&net, pool, cfg.batch, rng::derive_seed(cfg.seed, "search-epoch", epoch as u64));
        let tokens: Vec<&[usize]> = rollouts.iter().map(|r| r.tokens.as_slice()).collect();
        let scored = ev.score_batch(&tokens, epoch);

        let mut complexity = BTreeMap::new();
        for (c, _) in &scored {
            *complexity.entry(c.complexity).or_insert(0) += 1;
            *explored.entry(c.complexity).or_insert(0) += 1;
        }
        let penalized = scored.iter().filter(|(_, b)| b.penalized).count();
        let invalid = scored.iter().filter(|(c, _)| !c.l_e.is_finite()).count();

        let mut tracked: Vec<(Candidate, f64)> = scored.into_iter().map(|(c, b)| (c, b.r)).collect();
        let mut batch_rollouts: Vec<Rollout> = rollouts;
        let mut rewards: Vec<f64> = tracked.iter().map(|(_, r)| *r).collect();

        let mut gp_best = None;
        if let Some(gp) = &cfg.gp {
            let seed_pop: Vec<Individual> = tracked
                .iter()
                .map(|(c, reward)| Individual {
                    tokens: c.tokens.clone(),
                    reward: *reward,
                })
                .collect();
            let elites = evolve(
                seed_pop,
                pool,
                |t| ev.score(t, epoch).1.r,
                gp,
                rng::derive_seed(cfg.seed, "search-gp", epoch as u64),
            );
            gp_best = elites.first().map(|e| e.reward);
            for e in elites {
                let (c, b) = ev.score(&e.tokens, epoch);
                // elites the policy cannot produce are tracked but not trained on
                if let Some(r) = replay(&net, pool, &e.tokens) {
                    batch_rollouts.push(r);
                    rewards.push(b.r);
                }
                tracked.push((c, b.r));
            }
        }
        for (c, r) in &tracked {
            if reward_best.as_ref().is_none_or(|rb| *r > rb.reward) {
                reward_best = Some(RewardBest {
                    candidate: c.clone(),
                    reward: *r,
                    epoch,
                });
            }
            board.offer(c, epoch);
        }

        let refs: Vec<&Rollout> = batch_rollouts.iter().collect();
        let diag = train_step(&mut net, &mut adam, &refs, &rewards, &cfg.train);
        let best_so_far = reward_best.as_ref().map_or(0.0, |rb| rb.reward);
        let n = cfg.batch as f64;
        trace.push(EpochTrace {
            epoch,
            mean_reward: diag.mean_reward,
            batch_best_reward: diag.best_reward,
            quantile: diag.quantile,
            best_reward_so_far: best_so_far,
            complexity,
            penalty_fraction: penalized as f64 / n,
            invalid_fraction: invalid as f64 / n,
            gp_best_reward: gp_best,
            seconds: t0.elapsed().as_secs_f64(),
        });
        log::debug!(
            "epoch {epoch}: mean {:.4} best {:.4} q {:.4} penalized {penalized}",
            diag.mean_reward,
            best_so_far,
            diag.quantile
        );

        // convergence
        if best_so_far > last_best + cfg.convergence.min_improvement {
            last_best = best_so_far;
            stale = 0;
        } else {
            stale += 1;
        }
        let mut done = stale >= cfg.convergence.patience;
        if let Some((best, _)) = board.pick() {
            if let (Some(t), Some(tree)) = (target, best.tree.as_ref()) {
                if equivalent(tree, t, cfg.convergence.equivalence_tol, domain.as_ref()) {
                    recovered = Some(true);
                    done = true;
                }
            }
            if best.l_e <= cfg.convergence.nrmse_tol {
                if let Some(tree) = best.tree.as_ref() {
                    done |= ev.full_metrics(tree).0.is_some_and(|e| e <= cfg.convergence.nrmse_tol);
                }
            }
        }
        if done {
            converged_epoch = Some(epoch);
            break;
        }
    }

    let best = board.pick().and_then(|(c, epoch)| {
        let reward = ev.score(&c.tokens, *epoch).1.r;
        describe(&ev, c, reward, *epoch)
    });
    let best_by_reward = reward_best.and_then(|rb| describe(&ev, &rb.candidate, rb.reward, rb.epoch));
    Ok(SearchReport {
        seed: cfg.seed,
        epochs_run: trace.len(),
        converged_epoch,
        recovered,
        best,
        best_by_reward,
        trace,
        explored_complexity: explored,
        interaction_checks: ev.interaction_checks(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Stand-alone form of the stopping rule over an epoch trace and the
/// current best expression.
pub fn convergence_check(
    trace: &[EpochTrace],
    best: Option<&ExpressionTree>,
    best_nrmse: Option<f64>,
    target: Option<(&ExpressionTree, &EquivalenceDomain)>,
    rule: &ConvergenceRule,
) -> bool {
    if let (Some(b), Some((t, domain))) = (best, target) {
        if equivalent(b, t, rule.equivalence_tol, Some(domain)) {
            return true;
        }
    }
    if best_nrmse.is_some_and(|e| e <= rule.nrmse_tol) {
        return true;
    }
    let mut last = f64::NEG_INFINITY;
    let mut stale = 0;
    for t in trace {
        if t.best_reward_so_far > last + rule.min_improvement {
            last = t.best_reward_so_far;
            stale = 0;
        } else {
            stale += 1;
        }
    }
    stale >= rule.patience
}
