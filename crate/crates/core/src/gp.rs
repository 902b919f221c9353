//! Genetic programming over token sequences. Used to refine a sampled batch
//! for a few generations; the best individuals are handed back to the caller.

use std::cmp::Ordering;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{subtree_end, PrefixState, TokenPool};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub generations: usize,
    pub tournament: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Number of individuals returned.
    pub elites: usize,
    /// Attempts at a valid crossover or mutation before giving up.
    pub max_retries: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            generations: 20,
            tournament: 5,
            crossover_prob: 0.5,
            mutation_prob: 0.5,
            elites: 25,
            max_retries: 10,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("crossover_prob", self.crossover_prob), ("mutation_prob", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.tournament == 0 {
            return Err(Error::config("tournament size must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub tokens: Vec<usize>,
    pub reward: f64,
}

fn by_reward_desc(a: &Individual, b: &Individual) -> Ordering {
    b.reward
        .partial_cmp(&a.reward)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Top `k` distinct individuals by reward.
fn top_unique(mut pop: Vec<Individual>, k: usize) -> Vec<Individual> {
    pop.sort_by(by_reward_desc);
    pop.dedup_by(|a, b| a.tokens == b.tokens);
    pop.truncate(k);
    pop
}

/// A uniformly random valid sequence: each token is drawn uniformly from the
/// ones the constraint mask allows.
pub fn random_sequence(pool: &TokenPool, r: &mut rng::Rng) -> Vec<usize> {
    let mut state = PrefixState::new(pool);
    let mut out = Vec::new();
    let mut mask = vec![false; pool.len()];
    while !state.is_complete() {
        pool.mask_into(&state, &mut mask);
        let allowed: Vec<usize> = (0..pool.len()).filter(|&i| mask[i]).collect();
        let t = *allowed.choose(r).expect("pool construction guarantees a valid continuation");
        state.push(pool, t);
        out.push(t);
    }
    out
}

fn tournament<'a>(pop: &'a [Individual], size: usize, r: &mut rng::Rng) -> &'a Individual {
    let mut best = &pop[r.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[r.random_range(0..pop.len())];
        if by_reward_desc(c, best) == Ordering::Less {
            best = c;
        }
    }
    best
}

fn span(pool: &TokenPool, seq: &[usize], start: usize) -> usize {
    subtree_end(seq, start, |&t| pool.arity(t))
}

fn splice(seq: &[usize], start: usize, end: usize, insert: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(seq.len() - (end - start) + insert.len());
    out.extend_from_slice(&seq[..start]);
    out.extend_from_slice(insert);
    out.extend_from_slice(&seq[end..]);
    out
}

/// Swaps a random subtree of `a` with one of `b`; both children must be
/// valid, otherwise another pair of points is tried.
pub fn crossover(pool: &TokenPool, a: &[usize], b: &[usize], retries: usize, r: &mut rng::Rng) -> Option<(Vec<usize>, Vec<usize>)> {
    for _ in 0..retries {
        let i = r.random_range(0..a.len());
        let j = r.random_range(0..b.len());
        let (ie, je) = (span(pool, a, i), span(pool, b, j));
        let c1 = splice(a, i, ie, &b[j..je]);
        let c2 = splice(b, j, je, &a[i..ie]);
        if c1 != a && pool.validate(&c1).is_ok() && pool.validate(&c2).is_ok() {
            return Some((c1, c2));
        }
    }
    None
}

/// Replaces one token by another of the same arity.
pub fn point_mutation(pool: &TokenPool, seq: &[usize], retries: usize, r: &mut rng::Rng) -> Option<Vec<usize>> {
    for _ in 0..retries {
        let i = r.random_range(0..seq.len());
        let arity = pool.arity(seq[i]);
        let options: Vec<usize> = (0..pool.len()).filter(|&t| t != seq[i] && pool.arity(t) == arity).collect();
        let Some(&t) = options.choose(r) else { continue };
        let mut out = seq.to_vec();
        out[i] = t;
        if pool.validate(&out).is_ok() {
            return Some(out);
        }
    }
    None
}

/// Evolves `seed` for `cfg.generations` generations and returns the best
/// `cfg.elites` distinct individuals seen, best first. `fitness` scores a
/// token sequence; it is called in parallel and must be deterministic.
pub fn evolve<F>(seed: Vec<Individual>, pool: &TokenPool, fitness: F, cfg: &GpConfig, rng_seed: u64) -> Vec<Individual>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if seed.is_empty() {
        return Vec::new();
    }
    let mut r = rng::stream(rng_seed, "gp", 0);
    let n = seed.len();
    let mut hall = top_unique(seed.clone(), cfg.elites);
    let mut pop = seed;
    for generation in 0..cfg.generations {
        let mut children: Vec<Vec<usize>> = (0..n).map(|_| tournament(&pop, cfg.tournament, &mut r).tokens.clone()).collect();
        for pair in children.chunks_mut(2) {
            if pair.len() == 2 && r.random::<f64>() < cfg.crossover_prob {
                if let Some((c1, c2)) = crossover(pool, &pair[0], &pair[1], cfg.max_retries, &mut r) {
                    pair[0] = c1;
                    pair[1] = c2;
                }
            }
        }
        for child in children.iter_mut() {
            if r.random::<f64>() < cfg.mutation_prob {
                if let Some(m) = point_mutation(pool, child, cfg.max_retries, &mut r) {
                    *child = m;
                }
            }
        }
        let mut next: Vec<Individual> = children
            .into_par_iter()
            .map(|tokens| {
                let reward = fitness(&tokens);
                Individual { tokens, reward }
            })
            .collect();
        // the best so far always survives
        if let Some(best) = hall.first() {
            if let Some(worst) = (0..next.len()).max_by(|&a, &b| by_reward_desc(&next[a], &next[b]).then(a.cmp(&b))) {
                next[worst] = best.clone();
            }
        }
        hall.extend(next.iter().cloned());
        hall = top_unique(hall, cfg.elites);
        log::trace!("gp generation {generation}: best {:.6}", hall.first().map_or(f64::NAN, |h| h.reward));
        pop = next;
    }
    hall
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constopt::{fit_constants, ConstFitConfig};
    use crate::expr::{BinaryOp, ExpressionTree, TokenSpec};
    use crate::traffic::{generate_dataset, CarFollowingModel, GenerateConfig};

    fn pool() -> TokenPool {
        let mut t: Vec<TokenSpec> = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div]
            .into_iter()
            .map(TokenSpec::binary)
            .collect();
        t.push(TokenSpec::constant());
        t.push(TokenSpec::variable("v_f"));
        t.push(TokenSpec::variable("v_l"));
        TokenPool::new(
            t,
            vec![crate::expr::SamplingConstraint::LengthRange { min: 1, max: 15 }],
        )
        .unwrap()
    }

    fn toy_fitness(seq: &[usize]) -> f64 {
        // favours long sequences of low indices
        seq.iter().map(|&t| 1.0 / (1.0 + t as f64)).sum()
    }

    fn seed_pop(p: &TokenPool, n: usize, s: u64) -> Vec<Individual> {
        let mut r = rng::stream(s, "test", 0);
        (0..n)
            .map(|_| {
                let tokens = random_sequence(p, &mut r);
                Individual { reward: toy_fitness(&tokens), tokens }
            })
            .collect()
    }

    #[test]
    fn zero_generations_is_top_k() {
        let p = pool();
        let s = seed_pop(&p, 40, 1);
        let cfg = GpConfig { generations: 0, elites: 5, ..Default::default() };
        let out = evolve(s.clone(), &p, toy_fitness, &cfg, 0);
        assert_eq!(out, top_unique(s, 5));
    }

    #[test]
    fn identical_population_without_variation_is_fixed() {
        let p = pool();
        let one = seed_pop(&p, 1, 2).remove(0);
        let s = vec![one.clone(); 10];
        let cfg = GpConfig { mutation_prob: 0.0, crossover_prob: 0.0, ..Default::default() };
        let out = evolve(s, &p, toy_fitness, &cfg, 0);
        assert_eq!(out, vec![one]);
    }

    #[test]
    fn offspring_are_valid_and_elitism_holds() {
        let p = pool();
        let s = seed_pop(&p, 50, 3);
        let mut prev = f64::NEG_INFINITY;
        for g in [0, 1, 3, 6] {
            let cfg = GpConfig { generations: g, ..Default::default() };
            let out = evolve(s.clone(), &p, toy_fitness, &cfg, 9);
            for i in &out {
                p.validate(&i.tokens).unwrap();
            }
            assert!(out[0].reward >= prev);
            prev = out[0].reward;
        }
    }

    #[test]
    fn deterministic() {
        let p = pool();
        let s = seed_pop(&p, 30, 4);
        let cfg = GpConfig { generations: 5, ..Default::default() };
        assert_eq!(evolve(s.clone(), &p, toy_fitness, &cfg, 5), evolve(s, &p, toy_fitness, &cfg, 5));
    }

    #[test]
    fn finds_linear_gm_rule() {
        let p = pool();
        let full = generate_dataset(&GenerateConfig::for_model(CarFollowingModel::GM_DEFAULT, 0)).unwrap();
        let data = full.select_rows(&(0..full.n_rows()).step_by(12).collect::<Vec<_>>());
        let fit_cfg = ConstFitConfig { max_starts: 2, max_evals: 60, ..Default::default() };
        let fitness = |seq: &[usize]| {
            let Ok(tree) = ExpressionTree::from_indices(&p, seq) else { return 0.0 };
            match fit_constants(&tree, &data, &fit_cfg) {
                Ok(f) if f.l_e.is_finite() => 1.0 / (1.0 + f.l_e),
                _ => 0.0,
            }
        };
        let mut hits = 0;
        for seed in 0..10 {
            let mut r = rng::stream(seed, "test-seed", 0);
            let s: Vec<Individual> = (0..100)
                .map(|_| {
                    let tokens = random_sequence(&p, &mut r);
                    Individual { reward: fitness(&tokens), tokens }
                })
                .collect();
            let cfg = GpConfig { generations: 50, elites: 1, ..Default::default() };
            let best = &evolve(s, &p, fitness, &cfg, seed)[0];
            if 1.0 / best.reward - 1.0 < 1e-3 {
                hits += 1;
            }
        }
        assert!(hits >= 8, "{hits}/10");
    }
}
