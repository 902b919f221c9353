//! Token pools, sampling constraints, and the incremental prefix state used to
//! mask invalid choices during construction.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::token::{BinaryOp, TokenKind, TokenSpec, UnaryOp};
use super::tree::Symbol;
use crate::error::{Error, Result};

/// Upper length bound applied when a pool has no explicit length range.
pub const DEFAULT_MAX_LENGTH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SamplingConstraint {
    MaxOccurrences { token: String, max: usize },
    MustBeFirst { token: String },
    LengthRange { min: usize, max: usize },
    ForbidDescendant { ancestor: String, descendant: String },
}

#[derive(Clone, Debug)]
struct Rules {
    arity: Vec<usize>,
    cap: Vec<Option<usize>>,
    first: Option<usize>,
    min_len: usize,
    max_len: usize,
    /// `forbidden_under[d]` lists tokens that may not be ancestors of `d`.
    forbidden_under: Vec<Vec<usize>>,
    pow: Option<usize>,
    constant: Option<usize>,
}

/// An ordered, immutable set of tokens plus the constraints that govern how
/// they may be combined.
#[derive(Clone, Debug)]
pub struct TokenPool {
    tokens: Vec<TokenSpec>,
    symbols: Vec<Symbol>,
    constraints: Vec<SamplingConstraint>,
    by_name: HashMap<String, usize>,
    rules: Rules,
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    tokens: Vec<TokenSpec>,
    #[serde(default)]
    constraints: Vec<SamplingConstraint>,
}

impl TokenPool {
    pub fn new(tokens: Vec<TokenSpec>, constraints: Vec<SamplingConstraint>) -> Result<Self> {
        let mut by_name = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if by_name.insert(t.name.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate token name `{}`", t.name)));
            }
        }
        if !tokens.iter().any(|t| t.arity() == 0) {
            return Err(Error::config("token pool has no terminal (arity-0) token"));
        }
        let lookup = |name: &str| {
            by_name
                .get(name)
                .copied()
                .ok_or_else(|| Error::config(format!("constraint names unknown token `{name}`")))
        };
        let n = tokens.len();
        let mut rules = Rules {
            arity: tokens.iter().map(TokenSpec::arity).collect(),
            cap: vec![None; n],
            first: None,
            min_len: 1,
            max_len: DEFAULT_MAX_LENGTH,
            forbidden_under: vec![Vec::new(); n],
            pow: tokens.iter().position(|t| t.kind == TokenKind::Binary(BinaryOp::Pow)),
            constant: tokens.iter().position(|t| t.kind == TokenKind::Constant),
        };
        for c in &constraints {
            match c {
                SamplingConstraint::MaxOccurrences { token, max } => {
                    let i = lookup(token)?;
                    rules.cap[i] = Some(rules.cap[i].map_or(*max, |m| m.min(*max)));
                }
                SamplingConstraint::MustBeFirst { token } => {
                    let i = lookup(token)?;
                    if rules.first.is_some_and(|f| f != i) {
                        return Err(Error::config("conflicting must-be-first constraints"));
                    }
                    rules.first = Some(i);
                }
                SamplingConstraint::LengthRange { min, max } => {
                    if *min < 1 || max < min {
                        return Err(Error::config(format!("invalid length range [{min}, {max}]")));
                    }
                    rules.min_len = *min;
                    rules.max_len = *max;
                }
                SamplingConstraint::ForbidDescendant { ancestor, descendant } => {
                    let a = lookup(ancestor)?;
                    let d = lookup(descendant)?;
                    rules.forbidden_under[d].push(a);
                }
            }
        }
        if rules.pow.is_some() && rules.constant.is_none() {
            return Err(Error::config("`pow` requires a constant placeholder token for its exponent"));
        }
        if rules.first.is_some_and(|f| rules.cap[f] == Some(0)) {
            return Err(Error::config("must-be-first token has an occurrence cap of zero"));
        }
        let open_leaf = (0..n).any(|i| {
            rules.arity[i] == 0
                && rules.cap[i].is_none()
                && rules.forbidden_under[i].is_empty()
                && Some(i) != rules.constant
        });
        if !open_leaf {
            return Err(Error::config(
                "token pool needs at least one uncapped, unrestricted terminal that is not a constant",
            ));
        }
        let symbols = tokens.iter().map(|t| Symbol::from(t.name.as_str())).collect();
        let pool = Self {
            tokens,
            symbols,
            constraints,
            by_name,
            rules,
        };
        let root = PrefixState::new(&pool);
        if !pool.mask(&root).iter().any(|&m| m) {
            return Err(Error::config(format!(
                "no expression satisfies the constraints (length range [{}, {}])",
                pool.rules.min_len, pool.rules.max_len
            )));
        }
        Ok(pool)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PoolFile = serde_json::from_str(text)?;
        Self::new(f.tokens, f.constraints)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PoolFile {
            tokens: self.tokens.clone(),
            constraints: self.constraints.clone(),
        })
        .expect("pool serializes")
    }

    /// The same tokens under a different constraint list.
    pub fn with_constraints(&self, constraints: Vec<SamplingConstraint>) -> Result<Self> {
        Self::new(self.tokens.clone(), constraints)
    }

    pub fn tokens(&self) -> &[TokenSpec] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn constraints(&self) -> &[SamplingConstraint] {
        &self.constraints
    }

    pub fn symbol(&self, i: usize) -> Symbol {
        self.symbols[i].clone()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn arity(&self, i: usize) -> usize {
        self.rules.arity[i]
    }

    pub fn binary_index(&self, op: BinaryOp) -> Option<usize> {
        self.tokens.iter().position(|t| t.kind == TokenKind::Binary(op))
    }

    pub fn unary_index(&self, op: UnaryOp) -> Option<usize> {
        self.tokens.iter().position(|t| t.kind == TokenKind::Unary(op))
    }

    pub fn constant_index(&self) -> Option<usize> {
        self.rules.constant
    }

    pub fn length_range(&self) -> (usize, usize) {
        (self.rules.min_len, self.rules.max_len)
    }

    pub fn variable_names(&self) -> Vec<&str> {
        self.tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Variable)
            .map(|t| t.name.as_str())
            .collect()
    }

    /// Tokens that may be chosen next without violating any constraint now or
    /// making the length range unreachable later.
    pub fn mask(&self, state: &PrefixState) -> Vec<bool> {
        let mut out = vec![false; self.len()];
        self.mask_into(state, &mut out);
        out
    }

    pub fn mask_into(&self, state: &PrefixState, out: &mut [bool]) {
        for (t, slot) in out.iter_mut().enumerate() {
            *slot = self.allowed(state, t);
        }
    }

    /// Whether `t` may be appended to `state`.
    pub fn allowed(&self, state: &PrefixState, t: usize) -> bool {
        let r = &self.rules;
        if state.is_complete() {
            return false;
        }
        if state.len == 0 {
            if let Some(f) = r.first {
                if t != f {
                    return false;
                }
            }
        }
        if r.cap[t].is_some_and(|c| state.counts[t] as usize >= c) {
            return false;
        }
        let exponent_slot = state.next_is_exponent();
        if exponent_slot && Some(t) != r.constant {
            return false;
        }
        if !r.forbidden_under[t].is_empty()
            && state.frames.iter().any(|f| r.forbidden_under[t].contains(&f.token))
        {
            return false;
        }
        // feasibility of the remainder after choosing t
        let len = state.len + 1;
        let open = state.open_slots() - 1 + r.arity[t];
        let min_total = len + open;
        if min_total > r.max_len {
            return false;
        }
        let pending_exp = state.pending_exponents - usize::from(exponent_slot) + usize::from(Some(t) == r.pow);
        if let Some(c) = r.constant {
            if let Some(cap) = r.cap[c] {
                let used = state.counts[c] as usize + usize::from(t == c);
                if pending_exp > cap.saturating_sub(used) {
                    return false;
                }
            }
        }
        if open == 0 {
            return len >= r.min_len;
        }
        if min_total >= r.min_len {
            return true;
        }
        self.can_grow(state, t, r.min_len - min_total, r.max_len - min_total)
    }

    // Whether the tree can be lengthened by some amount in [need, room] using
    // non-pow operators still under their caps.
    fn can_grow(&self, state: &PrefixState, chosen: usize, need: usize, room: usize) -> bool {
        let r = &self.rules;
        let remaining = |i: usize| -> Option<usize> {
            r.cap[i].map(|c| c.saturating_sub(state.counts[i] as usize + usize::from(i == chosen)))
        };
        let grow_ops = |arity: usize| {
            (0..self.len()).filter(move |&i| r.arity[i] == arity && Some(i) != r.pow)
        };
        // a unary op extends by exactly one token
        for i in grow_ops(1) {
            match remaining(i) {
                None => return true,
                Some(k) if k >= need => return true,
                _ => {}
            }
        }
        // binary ops extend by two tokens each (operator + terminal)
        let mut budget = 0usize;
        for i in grow_ops(2) {
            match remaining(i) {
                None => {
                    budget = usize::MAX;
                    break;
                }
                Some(k) => budget = budget.saturating_add(k),
            }
        }
        let steps = need.div_ceil(2);
        steps <= budget && 2 * steps <= room
    }

    /// Replays a full token sequence, checking every constraint.
    pub fn validate(&self, indices: &[usize]) -> Result<()> {
        let mut state = PrefixState::new(self);
        for (pos, &t) in indices.iter().enumerate() {
            if t >= self.len() {
                return Err(Error::Constraint {
                    position: pos,
                    reason: format!("token index {t} out of range"),
                });
            }
            if !self.allowed(&state, t) {
                return Err(Error::Constraint {
                    position: pos,
                    reason: format!("`{}` is not allowed here", self.tokens[t].name),
                });
            }
            state.push(self, t);
        }
        if !state.is_complete() {
            return Err(Error::Constraint {
                position: indices.len(),
                reason: "expression is incomplete".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Frame {
    token: usize,
    remaining: usize,
    first_child: Option<usize>,
}

/// Incremental state of a partially built pre-order sequence.
#[derive(Clone, Debug)]
pub struct PrefixState {
    len: usize,
    counts: Vec<u16>,
    frames: Vec<Frame>,
    pending_exponents: usize,
    complete: bool,
    pow: Option<usize>,
}

/// Parent and sibling of the next open slot; `None` means "empty".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotContext {
    pub parent: Option<usize>,
    pub sibling: Option<usize>,
}

impl PrefixState {
    pub fn new(pool: &TokenPool) -> Self {
        Self {
            len: 0,
            counts: vec![0; pool.len()],
            frames: Vec::new(),
            pending_exponents: 0,
            complete: false,
            pow: pool.rules.pow,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn count(&self, t: usize) -> usize {
        self.counts[t] as usize
    }

    /// Number of slots still to be filled (1 for the empty prefix).
    pub fn open_slots(&self) -> usize {
        if self.len == 0 {
            return 1;
        }
        self.frames.iter().map(|f| f.remaining).sum()
    }

    fn next_is_exponent(&self) -> bool {
        match (self.frames.last(), self.pow) {
            (Some(f), Some(p)) => f.token == p && f.remaining == 1,
            _ => false,
        }
    }

    pub fn context(&self) -> SlotContext {
        match self.frames.last() {
            None => SlotContext {
                parent: None,
                sibling: None,
            },
            Some(f) => SlotContext {
                parent: Some(f.token),
                sibling: f.first_child,
            },
        }
    }

    pub fn push(&mut self, pool: &TokenPool, t: usize) {
        debug_assert!(!self.complete, "push onto a complete expression");
        if self.next_is_exponent() {
            self.pending_exponents -= 1;
        }
        if let Some(top) = self.frames.last_mut() {
            if top.first_child.is_none() && top.remaining == pool.rules.arity[top.token] {
                top.first_child = Some(t);
            }
            top.remaining -= 1;
        }
        self.len += 1;
        self.counts[t] += 1;
        let arity = pool.rules.arity[t];
        if arity > 0 {
            if Some(t) == self.pow {
                self.pending_exponents += 1;
            }
            self.frames.push(Frame {
                token: t,
                remaining: arity,
                first_child: None,
            });
        } else {
            while self.frames.last().is_some_and(|f| f.remaining == 0) {
                self.frames.pop();
            }
            if self.frames.is_empty() {
                self.complete = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn arith_pool(constraints: Vec<SamplingConstraint>) -> TokenPool {
        TokenPool::new(
            vec![
                TokenSpec::binary(BinaryOp::Add),
                TokenSpec::binary(BinaryOp::Mul),
                TokenSpec::binary(BinaryOp::Min),
                TokenSpec::variable("x"),
                TokenSpec::variable("y"),
            ],
            constraints,
        )
        .unwrap()
    }

    fn push_all(pool: &TokenPool, names: &[&str]) -> PrefixState {
        let mut s = PrefixState::new(pool);
        for n in names {
            let t = pool.index_of(n).unwrap();
            assert!(pool.allowed(&s, t), "{n} rejected");
            s.push(pool, t);
        }
        s
    }

    #[test]
    fn must_be_first_forces_the_root() {
        let pool = arith_pool(vec![SamplingConstraint::MustBeFirst { token: "min".into() }]);
        let mask = pool.mask(&PrefixState::new(&pool));
        assert_eq!(mask, vec![false, false, true, false, false]);
    }

    #[test]
    fn occurrence_cap_masks_token() {
        let pool = arith_pool(vec![SamplingConstraint::MaxOccurrences {
            token: "min".into(),
            max: 1,
        }]);
        let s = push_all(&pool, &["min"]);
        assert!(!pool.mask(&s)[pool.index_of("min").unwrap()]);
    }

    #[test]
    fn last_slot_at_max_length_takes_terminals_only() {
        let pool = arith_pool(vec![SamplingConstraint::LengthRange { min: 1, max: 5 }]);
        // "+ x +" has length 3 and two open slots; use "+ + x y" (length 4, one slot)
        let s = push_all(&pool, &["+", "+", "x", "y"]);
        assert_eq!(s.open_slots(), 1);
        assert_eq!(s.len(), 4);
        let mask = pool.mask(&s);
        assert_eq!(mask, vec![false, false, false, true, true]);
    }

    #[test]
    fn terminals_blocked_until_min_length_reachable() {
        let pool = arith_pool(vec![SamplingConstraint::LengthRange { min: 5, max: 9 }]);
        let root = pool.mask(&PrefixState::new(&pool));
        assert_eq!(root, vec![true, true, true, false, false]);
        let s = push_all(&pool, &["+", "x"]);
        // completing with a terminal now would give length 3 < 5
        assert_eq!(pool.mask(&s), vec![true, true, true, false, false]);
    }

    #[test]
    fn parity_makes_even_only_range_unsatisfiable() {
        let err = TokenPool::new(
            vec![TokenSpec::binary(BinaryOp::Add), TokenSpec::variable("x")],
            vec![SamplingConstraint::LengthRange { min: 4, max: 4 }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn pool_validation_errors() {
        assert!(TokenPool::new(vec![TokenSpec::binary(BinaryOp::Add)], vec![]).is_err());
        assert!(TokenPool::new(
            vec![TokenSpec::variable("x"), TokenSpec::variable("x")],
            vec![]
        )
        .is_err());
        assert!(TokenPool::new(
            vec![TokenSpec::binary(BinaryOp::Pow), TokenSpec::variable("x")],
            vec![]
        )
        .is_err());
        assert!(TokenPool::new(
            vec![TokenSpec::variable("x")],
            vec![SamplingConstraint::MustBeFirst { token: "min".into() }]
        )
        .is_err());
    }

    #[test]
    fn pow_exponent_slot_takes_only_constants() {
        let pool = TokenPool::new(
            vec![
                TokenSpec::binary(BinaryOp::Pow),
                TokenSpec::binary(BinaryOp::Add),
                TokenSpec::constant(),
                TokenSpec::variable("x"),
            ],
            vec![],
        )
        .unwrap();
        let s = push_all(&pool, &["pow", "x"]);
        assert_eq!(pool.mask(&s), vec![false, false, true, false]);
    }

    #[test]
    fn constant_cap_limits_pow_nesting() {
        let pool = TokenPool::new(
            vec![
                TokenSpec::binary(BinaryOp::Pow),
                TokenSpec::binary(BinaryOp::Add),
                TokenSpec::constant(),
                TokenSpec::variable("x"),
            ],
            vec![SamplingConstraint::MaxOccurrences {
                token: "const".into(),
                max: 1,
            }],
        )
        .unwrap();
        let s = push_all(&pool, &["pow"]);
        // a second pow would need two constants
        assert!(!pool.mask(&s)[0]);
    }

    #[test]
    fn forbid_descendant_applies_to_whole_subtree() {
        let pool = arith_pool(vec![SamplingConstraint::ForbidDescendant {
            ancestor: "min".into(),
            descendant: "y".into(),
        }]);
        let s = push_all(&pool, &["+", "min", "+", "x"]);
        assert!(!pool.mask(&s)[pool.index_of("y").unwrap()]);
        let s = push_all(&pool, &["+", "min", "x", "x"]);
        assert!(pool.mask(&s)[pool.index_of("y").unwrap()]);
    }

    #[test]
    fn context_reports_parent_and_sibling() {
        let pool = arith_pool(vec![]);
        let s = PrefixState::new(&pool);
        assert_eq!(s.context(), SlotContext { parent: None, sibling: None });
        let s = push_all(&pool, &["+", "x"]);
        assert_eq!(
            s.context(),
            SlotContext {
                parent: pool.index_of("+"),
                sibling: pool.index_of("x")
            }
        );
        let s = push_all(&pool, &["+", "*"]);
        assert_eq!(
            s.context(),
            SlotContext {
                parent: pool.index_of("*"),
                sibling: None
            }
        );
        let s = push_all(&pool, &["+", "*", "x", "y"]);
        assert_eq!(
            s.context(),
            SlotContext {
                parent: pool.index_of("+"),
                sibling: pool.index_of("*")
            }
        );
    }

    #[test]
    fn validate_replays_constraints() {
        let pool = arith_pool(vec![
            SamplingConstraint::MustBeFirst { token: "min".into() },
            SamplingConstraint::MaxOccurrences {
                token: "min".into(),
                max: 1,
            },
        ]);
        let ix = |s: &str| s.split(' ').map(|n| pool.index_of(n).unwrap()).collect::<Vec<_>>();
        assert!(pool.validate(&ix("min x y")).is_ok());
        assert!(pool.validate(&ix("+ x y")).is_err());
        assert!(pool.validate(&ix("min min x y y")).is_err());
        assert!(pool.validate(&ix("min x")).is_err());
    }

    #[test]
    fn pool_json_round_trip() {
        let pool = arith_pool(vec![SamplingConstraint::LengthRange { min: 3, max: 9 }]);
        let back = TokenPool::from_json(&pool.to_json()).unwrap();
        assert_eq!(back.tokens(), pool.tokens());
        assert_eq!(back.constraints(), pool.constraints());
    }
}
