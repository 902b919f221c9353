use rand::Rng as _;
use rayon::prelude::*;

use super::lstm::{masked_softmax, PolicyNet, StepCache};
use crate::expr::{PrefixState, TokenPool};
use crate::rng;

/// One sampled (or replayed) expression with what the gradient needs.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub(crate) caches: Vec<StepCache>,
    /// Masked probabilities at each step.
    pub(crate) probs: Vec<Vec<f64>>,
}

impl Rollout {
    /// Sum of per-step entropies of the masked distributions.
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .map(|p| -p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>())
            .sum()
    }

    pub fn step_probs(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

fn run(net: &PolicyNet, pool: &TokenPool, mut choose: impl FnMut(&[f64], &[bool]) -> Option<usize>) -> Option<Rollout> {
    let n = pool.len();
    let empty = net.empty_index();
    let mut state = PrefixState::new(pool);
    let (mut h, mut c) = net.zero_state();
    let mut logits = vec![0.0; n];
    let mut mask = vec![false; n];
    let mut probs = vec![0.0; n];
    let mut out = Rollout {
        tokens: Vec::new(),
        log_prob: 0.0,
        caches: Vec::new(),
        probs: Vec::new(),
    };
    while !state.is_complete() {
        let ctx = state.context();
        let cache = net.step(ctx.parent.unwrap_or(empty), ctx.sibling.unwrap_or(empty), &h, &c, &mut logits);
        pool.mask_into(&state, &mut mask);
        masked_softmax(&logits, &mask, &mut probs);
        let t = choose(&probs, &mask)?;
        if !mask[t] || probs[t] <= 0.0 {
            return None;
        }
        out.log_prob += probs[t].ln();
        out.tokens.push(t);
        h.clone_from(&cache.h);
        c.clone_from(&cache.c);
        out.caches.push(cache);
        out.probs.push(probs.clone());
        state.push(pool, t);
    }
    Some(out)
}

/// Draws one expression autoregressively under the pool's mask.
pub fn sample_one(net: &PolicyNet, pool: &TokenPool, r: &mut rng::Rng) -> Rollout {
    run(net, pool, |probs, _| {
        let u: f64 = r.random();
        let mut acc = 0.0;
        let mut last = None;
        for (i, p) in probs.iter().enumerate() {
            if *p > 0.0 {
                acc += p;
                last = Some(i);
                if u < acc {
                    return Some(i);
                }
            }
        }
        last
    })
    .expect("the mask always leaves a completable token")
}

/// Samples `batch` expressions; rollout `i` uses stream `(seed, i)`.
pub fn sample_batch(net: &PolicyNet, pool: &TokenPool, batch: usize, seed: u64) -> Vec<Rollout> {
    (0..batch)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "policy-rollout", i as u64);
            sample_one(net, pool, &mut r)
        })
        .collect()
}

/// Replays a fixed token sequence; `None` if any token has zero probability
/// under the mask or the sequence does not end exactly when complete.
pub fn replay(net: &PolicyNet, pool: &TokenPool, tokens: &[usize]) -> Option<Rollout> {
    let mut it = tokens.iter();
    let out = run(net, pool, |_, _| it.next().copied())?;
    (out.tokens.len() == tokens.len()).then_some(out)
}
