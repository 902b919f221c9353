use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::pool::TokenPool;
use super::token::{BinaryOp, TokenKind, UnaryOp, CONSTANT_NAME};
use crate::error::{Error, Result};

pub type Symbol = Arc<str>;

/// A single pre-order position of an expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Node {
    Binary(BinaryOp),
    Unary(UnaryOp),
    Var(Symbol),
    Param(Symbol, f64),
    /// Fitted-constant placeholder; its value lives in [`ExpressionTree::constants`].
    Const,
    /// A numeric literal produced by simplification or parsing.
    Literal(f64),
}

impl Node {
    pub fn arity(&self) -> usize {
        match self {
            Node::Binary(_) => 2,
            Node::Unary(_) => 1,
            _ => 0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Node::Binary(op) => op.symbol().to_string(),
            Node::Unary(op) => op.symbol().to_string(),
            Node::Var(s) | Node::Param(s, _) => s.to_string(),
            Node::Const => CONSTANT_NAME.to_string(),
            Node::Literal(v) => format!("{v:?}"),
        }
    }
}

/// An expression stored as a complete pre-order token sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressionTree {
    preorder: Vec<Node>,
    /// Fitted values keyed by the pre-order position of each placeholder.
    #[serde(default)]
    constants: BTreeMap<usize, f64>,
}

/// Checks the running-deficit condition of a complete pre-order encoding.
pub(crate) fn check_complete<I: IntoIterator<Item = usize>>(arities: I) -> Result<usize> {
    let mut open = 1usize;
    let mut n = 0;
    for a in arities {
        if open == 0 {
            return Err(Error::Malformed(format!("trailing tokens after position {}", n - 1)));
        }
        open = open - 1 + a;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Malformed("empty expression".into()));
    }
    if open != 0 {
        return Err(Error::Malformed(format!("incomplete expression: {open} open slot(s)")));
    }
    Ok(n)
}

impl ExpressionTree {
    pub fn new(preorder: Vec<Node>) -> Result<Self> {
        check_complete(preorder.iter().map(Node::arity))?;
        Ok(Self {
            preorder,
            constants: BTreeMap::new(),
        })
    }

    pub fn with_constants(preorder: Vec<Node>, constants: BTreeMap<usize, f64>) -> Result<Self> {
        let mut t = Self::new(preorder)?;
        for (&pos, &v) in &constants {
            if !matches!(t.preorder.get(pos), Some(Node::Const)) {
                return Err(Error::Malformed(format!("no constant placeholder at position {pos}")));
            }
            t.constants.insert(pos, v);
        }
        Ok(t)
    }

    /// Builds a tree from pool token indices.
    pub fn from_indices(pool: &TokenPool, indices: &[usize]) -> Result<Self> {
        let nodes = indices
            .iter()
            .map(|&i| {
                let spec = pool
                    .tokens()
                    .get(i)
                    .ok_or_else(|| Error::Malformed(format!("token index {i} out of range")))?;
                Ok(match spec.kind {
                    TokenKind::Binary(op) => Node::Binary(op),
                    TokenKind::Unary(op) => Node::Unary(op),
                    TokenKind::Variable => Node::Var(pool.symbol(i)),
                    TokenKind::Parameter(v) => Node::Param(pool.symbol(i), v),
                    TokenKind::Constant => Node::Const,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes)
    }

    /// Maps this tree back onto pool token indices. Literals have no pool
    /// token, so simplified trees generally do not encode.
    pub fn to_indices(&self, pool: &TokenPool) -> Option<Vec<usize>> {
        self.preorder
            .iter()
            .map(|n| match n {
                Node::Binary(op) => pool.binary_index(*op),
                Node::Unary(op) => pool.unary_index(*op),
                Node::Var(s) | Node::Param(s, _) => pool.index_of(s),
                Node::Const => pool.constant_index(),
                Node::Literal(_) => None,
            })
            .collect()
    }

    /// Parses whitespace-separated prefix notation, e.g. `min + v_f a_max v_l`.
    ///
    /// Names resolve against `pool` first, then operator symbols, `const`,
    /// and numeric literals; any other identifier becomes a variable.
    pub fn parse_prefix(text: &str, pool: Option<&TokenPool>) -> Result<Self> {
        let mut nodes = Vec::new();
        for word in text.split_whitespace() {
            if let Some(i) = pool.and_then(|p| p.index_of(word)) {
                let p = pool.unwrap();
                nodes.push(match p.tokens()[i].kind {
                    TokenKind::Binary(op) => Node::Binary(op),
                    TokenKind::Unary(op) => Node::Unary(op),
                    TokenKind::Variable => Node::Var(p.symbol(i)),
                    TokenKind::Parameter(v) => Node::Param(p.symbol(i), v),
                    TokenKind::Constant => Node::Const,
                });
            } else if let Some(op) = BinaryOp::from_symbol(word) {
                nodes.push(Node::Binary(op));
            } else if let Some(op) = UnaryOp::from_symbol(word) {
                nodes.push(Node::Unary(op));
            } else if word == CONSTANT_NAME || word == "c" {
                nodes.push(Node::Const);
            } else if let Ok(v) = word.parse::<f64>() {
                nodes.push(Node::Literal(v));
            } else if word.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_') {
                nodes.push(Node::Var(Symbol::from(word)));
            } else {
                return Err(Error::Malformed(format!("unrecognized token `{word}`")));
            }
        }
        Self::new(nodes)
    }

    pub fn preorder(&self) -> &[Node] {
        &self.preorder
    }

    pub fn constants(&self) -> &BTreeMap<usize, f64> {
        &self.constants
    }

    /// Positions of constant placeholders in pre-order.
    pub fn constant_positions(&self) -> Vec<usize> {
        self.preorder
            .iter()
            .enumerate()
            .filter_map(|(i, n)| matches!(n, Node::Const).then_some(i))
            .collect()
    }

    pub fn set_constants(&mut self, values: BTreeMap<usize, f64>) -> Result<()> {
        for &pos in values.keys() {
            if !matches!(self.preorder.get(pos), Some(Node::Const)) {
                return Err(Error::Malformed(format!("no constant placeholder at position {pos}")));
            }
        }
        self.constants = values;
        Ok(())
    }

    pub fn is_fitted(&self) -> bool {
        self.constant_positions().iter().all(|p| self.constants.contains_key(p))
    }

    /// Expression complexity: the number of pre-order tokens.
    pub fn complexity(&self) -> usize {
        self.preorder.len()
    }

    /// Variable names referenced, in order of first appearance.
    pub fn variables(&self) -> Vec<Symbol> {
        let mut out: Vec<Symbol> = Vec::new();
        for n in &self.preorder {
            if let Node::Var(s) = n {
                if !out.contains(s) {
                    out.push(s.clone());
                }
            }
        }
        out
    }

    pub fn contains_variable(&self, name: &str) -> bool {
        self.preorder.iter().any(|n| matches!(n, Node::Var(s) if &**s == name))
    }

    /// End (exclusive) of the subtree rooted at `start`.
    pub fn subtree_end(&self, start: usize) -> usize {
        subtree_end(&self.preorder, start, Node::arity)
    }

    /// Replaces every fitted placeholder with a literal of its value.
    pub fn inline_constants(&self) -> ExpressionTree {
        let nodes = self
            .preorder
            .iter()
            .enumerate()
            .map(|(i, n)| match (n, self.constants.get(&i)) {
                (Node::Const, Some(&v)) => Node::Literal(v),
                _ => n.clone(),
            })
            .collect();
        ExpressionTree {
            preorder: nodes,
            constants: BTreeMap::new(),
        }
    }

    /// Space-separated prefix notation; fitted constants print as values.
    pub fn to_prefix_string(&self) -> String {
        self.preorder
            .iter()
            .enumerate()
            .map(|(i, n)| match (n, self.constants.get(&i)) {
                (Node::Const, Some(v)) => format!("{v:?}"),
                _ => n.name(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn infix(&self) -> String {
        let mut out = String::new();
        self.write_infix(0, &mut out, true);
        out
    }

    fn write_infix(&self, at: usize, out: &mut String, top: bool) -> usize {
        use std::fmt::Write;
        match &self.preorder[at] {
            Node::Binary(op) => {
                let lhs_at = at + 1;
                match op {
                    BinaryOp::Min | BinaryOp::Pow => {
                        out.push_str(op.symbol());
                        out.push('(');
                        let rhs_at = self.write_infix(lhs_at, out, true);
                        out.push_str(", ");
                        let end = self.write_infix(rhs_at, out, true);
                        out.push(')');
                        end
                    }
                    _ => {
                        if !top {
                            out.push('(');
                        }
                        let rhs_at = self.write_infix(lhs_at, out, false);
                        let _ = write!(out, " {} ", op.symbol());
                        let end = self.write_infix(rhs_at, out, false);
                        if !top {
                            out.push(')');
                        }
                        end
                    }
                }
            }
            Node::Unary(op) => {
                out.push_str(op.symbol());
                out.push('(');
                let end = self.write_infix(at + 1, out, true);
                out.push(')');
                end
            }
            Node::Var(s) | Node::Param(s, _) => {
                out.push_str(s);
                at + 1
            }
            Node::Const => {
                match self.constants.get(&at) {
                    Some(v) => {
                        let _ = write!(out, "{}", fmt_number(*v));
                    }
                    None => out.push('c'),
                }
                at + 1
            }
            Node::Literal(v) => {
                let _ = write!(out, "{}", fmt_number(*v));
                at + 1
            }
        }
    }
}

fn fmt_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').to_string()
    }
}

impl fmt::Display for ExpressionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.infix())
    }
}

/// End (exclusive) of the subtree starting at `start` in a pre-order slice.
pub fn subtree_end<T>(seq: &[T], start: usize, arity: impl Fn(&T) -> usize) -> usize {
    let mut open = 1usize;
    let mut i = start;
    while open > 0 {
        open = open - 1 + arity(&seq[i]);
        i += 1;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_incomplete_and_overlong_sequences() {
        assert!(ExpressionTree::parse_prefix("+ v_f", None).is_err());
        assert!(ExpressionTree::parse_prefix("v_f v_l", None).is_err());
        assert!(ExpressionTree::parse_prefix("", None).is_err());
    }

    #[test]
    fn complexity_counts_tokens() {
        assert_eq!(ExpressionTree::parse_prefix("v_f", None).unwrap().complexity(), 1);
        assert_eq!(ExpressionTree::parse_prefix("+ v_f a_max", None).unwrap().complexity(), 3);
    }

    #[test]
    fn infix_rendering() {
        let t = ExpressionTree::parse_prefix("min + v_f 2.6 + v_l / * 9 ds + + v_f v_l 9", None).unwrap();
        assert_eq!(t.infix(), "min(v_f + 2.6, v_l + ((9.0 * ds) / ((v_f + v_l) + 9.0)))");
    }

    #[test]
    fn constants_attach_only_to_placeholders() {
        let t = ExpressionTree::parse_prefix("* c - v_l v_f", None).unwrap();
        let mut good = BTreeMap::new();
        good.insert(1, 0.368);
        assert!(t.clone().set_constants(good).is_ok());
        let mut bad = BTreeMap::new();
        bad.insert(2, 1.0);
        assert!(t.clone().set_constants(bad).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut t = ExpressionTree::parse_prefix("+ v_f * c - v_l v_f", None).unwrap();
        t.set_constants([(3, 0.368)].into_iter().collect()).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        let back: ExpressionTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }
}
