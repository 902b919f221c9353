//! Rule-based simplification into a canonical form.
//!
//! Trees are lifted into n-ary sums, products and minima, rewritten, and
//! lowered back into left-associated binary chains. Parameters and fitted
//! constants are folded into literals. The rewrite set: constant folding,
//! `x - x -> 0`, `x / x -> 1` (unless `x` is the literal zero), `0 + x -> x`,
//! `1 * x -> x`, `0 * x -> 0`, duplicate removal under `min`, and canonical
//! ordering of commutative chains (head token name, then subtree key).

use std::cmp::Ordering;
use std::fmt::Write;

use super::token::{BinaryOp, UnaryOp};
use super::tree::{ExpressionTree, Node, Symbol};

#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Num(f64),
    Var(Symbol),
    /// Unfitted placeholder; opaque, identified by its original position.
    Hole(usize),
    /// Terms paired with a negation flag.
    Sum(Vec<(bool, Expr)>),
    /// Factors paired with an inversion flag.
    Prod(Vec<(bool, Expr)>),
    Min(Vec<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Unary(UnaryOp, Box<Expr>),
}

fn lift(tree: &ExpressionTree, at: usize) -> (Expr, usize) {
    match &tree.preorder()[at] {
        Node::Binary(op) => {
            let (a, next) = lift(tree, at + 1);
            let (b, end) = lift(tree, next);
            let e = match op {
                BinaryOp::Add => Expr::Sum(vec![(false, a), (false, b)]),
                BinaryOp::Sub => Expr::Sum(vec![(false, a), (true, b)]),
                BinaryOp::Mul => Expr::Prod(vec![(false, a), (false, b)]),
                BinaryOp::Div => Expr::Prod(vec![(false, a), (true, b)]),
                BinaryOp::Min => Expr::Min(vec![a, b]),
                BinaryOp::Pow => Expr::Pow(Box::new(a), Box::new(b)),
            };
            (e, end)
        }
        Node::Unary(op) => {
            let (a, end) = lift(tree, at + 1);
            (Expr::Unary(*op, Box::new(a)), end)
        }
        Node::Var(s) => (Expr::Var(s.clone()), at + 1),
        Node::Param(_, v) | Node::Literal(v) => (Expr::Num(*v), at + 1),
        Node::Const => match tree.constants().get(&at) {
            Some(v) => (Expr::Num(*v), at + 1),
            None => (Expr::Hole(at), at + 1),
        },
    }
}

impl Expr {
    fn head(&self) -> &str {
        match self {
            Expr::Num(_) => "#",
            Expr::Var(s) => s,
            Expr::Hole(_) => "c",
            Expr::Sum(_) => "+",
            Expr::Prod(_) => "*",
            Expr::Min(_) => "min",
            Expr::Pow(..) => "pow",
            Expr::Unary(op, _) => op.symbol(),
        }
    }

    /// Canonical text key; `mask_numbers` replaces literal values with `#`.
    fn key(&self, mask_numbers: bool, out: &mut String) {
        match self {
            Expr::Num(v) => {
                if mask_numbers {
                    out.push('#');
                } else {
                    let _ = write!(out, "{v:?}");
                }
            }
            Expr::Var(s) => out.push_str(s),
            Expr::Hole(p) => {
                let _ = write!(out, "c{p}");
            }
            Expr::Sum(ts) | Expr::Prod(ts) => {
                out.push_str(self.head());
                out.push('(');
                for (flag, t) in ts {
                    out.push(if *flag { '~' } else { ' ' });
                    t.key(mask_numbers, out);
                }
                out.push(')');
            }
            Expr::Min(ts) => {
                out.push_str("min(");
                for t in ts {
                    out.push(' ');
                    t.key(mask_numbers, out);
                }
                out.push(')');
            }
            Expr::Pow(a, b) => {
                out.push_str("pow(");
                a.key(mask_numbers, out);
                out.push(',');
                b.key(mask_numbers, out);
                out.push(')');
            }
            Expr::Unary(op, a) => {
                out.push_str(op.symbol());
                out.push('(');
                a.key(mask_numbers, out);
                out.push(')');
            }
        }
    }

    fn full_key(&self) -> String {
        let mut s = String::new();
        self.key(false, &mut s);
        s
    }

    fn masked_key(&self) -> String {
        let mut s = String::new();
        self.key(true, &mut s);
        s
    }
}

fn canonical_cmp(a: &Expr, b: &Expr) -> Ordering {
    // literals sort first so coefficients and offsets have a fixed place
    let rank = |e: &Expr| usize::from(!matches!(e, Expr::Num(_)));
    rank(a)
        .cmp(&rank(b))
        .then_with(|| a.head().cmp(b.head()))
        .then_with(|| a.masked_key().cmp(&b.masked_key()))
        .then_with(|| a.full_key().cmp(&b.full_key()))
}

fn normalize(e: Expr) -> Expr {
    match e {
        Expr::Num(_) | Expr::Var(_) | Expr::Hole(_) => e,
        Expr::Sum(terms) => normalize_sum(terms),
        Expr::Prod(factors) => normalize_prod(factors),
        Expr::Min(items) => normalize_min(items),
        Expr::Pow(a, b) => {
            let a = normalize(*a);
            let b = normalize(*b);
            match (&a, &b) {
                (Expr::Num(x), Expr::Num(y)) => Expr::Num(x.powf(*y)),
                (_, Expr::Num(y)) if *y == 1.0 => a,
                _ => Expr::Pow(Box::new(a), Box::new(b)),
            }
        }
        Expr::Unary(op, a) => {
            let a = normalize(*a);
            match (op, a) {
                (_, Expr::Num(x)) => Expr::Num(op.apply(x)),
                (UnaryOp::Neg, a) => normalize_sum(vec![(true, a)]),
                (op, a) => Expr::Unary(op, Box::new(a)),
            }
        }
    }
}

fn normalize_sum(terms: Vec<(bool, Expr)>) -> Expr {
    let mut flat: Vec<(bool, Expr)> = Vec::new();
    let mut offset = 0.0;
    let mut stack: Vec<(bool, Expr)> = terms.into_iter().rev().collect();
    while let Some((neg, t)) = stack.pop() {
        match normalize(t) {
            Expr::Sum(inner) => {
                for (n2, t2) in inner.into_iter().rev() {
                    stack.push((neg != n2, t2));
                }
            }
            Expr::Num(v) => offset += if neg { -v } else { v },
            t => flat.push((neg, t)),
        }
    }
    // cancel and merge repeated terms by signed multiplicity
    let mut merged: Vec<(i64, Expr, String)> = Vec::new();
    for (neg, t) in flat {
        let key = t.full_key();
        let m = if neg { -1 } else { 1 };
        match merged.iter_mut().find(|(_, _, k)| *k == key) {
            Some(slot) => slot.0 += m,
            None => merged.push((m, t, key)),
        }
    }
    let mut out: Vec<(bool, Expr)> = Vec::new();
    for (m, t, _) in merged {
        match m {
            0 => {}
            1 => out.push((false, t)),
            -1 => out.push((true, t)),
            m => out.push((m < 0, normalize_prod(vec![(false, Expr::Num(m.unsigned_abs() as f64)), (false, t)]))),
        }
    }
    if offset != 0.0 {
        out.push((offset < 0.0, Expr::Num(offset.abs())));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| canonical_cmp(&a.1, &b.1)));
    match out.len() {
        0 => Expr::Num(0.0),
        1 if !out[0].0 => out.pop().unwrap().1,
        _ => Expr::Sum(out),
    }
}

fn normalize_prod(factors: Vec<(bool, Expr)>) -> Expr {
    let mut flat: Vec<(bool, Expr)> = Vec::new();
    let mut coeff = 1.0;
    let mut stack: Vec<(bool, Expr)> = factors.into_iter().rev().collect();
    while let Some((inv, f)) = stack.pop() {
        match normalize(f) {
            Expr::Prod(inner) => {
                for (i2, f2) in inner.into_iter().rev() {
                    stack.push((inv != i2, f2));
                }
            }
            Expr::Num(v) => {
                if inv {
                    coeff /= v
                } else {
                    coeff *= v
                }
            }
            f => flat.push((inv, f)),
        }
    }
    if coeff == 0.0 {
        return Expr::Num(0.0);
    }
    let mut merged: Vec<(i64, Expr, String)> = Vec::new();
    for (inv, f) in flat {
        let key = f.full_key();
        let m = if inv { -1 } else { 1 };
        match merged.iter_mut().find(|(_, _, k)| *k == key) {
            Some(slot) => slot.0 += m,
            None => merged.push((m, f, key)),
        }
    }
    let mut out: Vec<(bool, Expr)> = Vec::new();
    for (m, f, _) in merged {
        for _ in 0..m.unsigned_abs() {
            out.push((m < 0, f.clone()));
        }
    }
    if coeff != 1.0 || out.is_empty() {
        out.push((false, Expr::Num(coeff)));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| canonical_cmp(&a.1, &b.1)));
    if out.len() == 1 && !out[0].0 {
        return out.pop().unwrap().1;
    }
    Expr::Prod(out)
}

fn normalize_min(items: Vec<Expr>) -> Expr {
    let mut flat: Vec<Expr> = Vec::new();
    let mut lowest: Option<f64> = None;
    let mut stack: Vec<Expr> = items.into_iter().rev().collect();
    while let Some(it) = stack.pop() {
        match normalize(it) {
            Expr::Min(inner) => stack.extend(inner.into_iter().rev()),
            Expr::Num(v) => lowest = Some(lowest.map_or(v, |l| l.min(v))),
            e => {
                if !flat.iter().any(|f| f.full_key() == e.full_key()) {
                    flat.push(e);
                }
            }
        }
    }
    if let Some(v) = lowest {
        flat.push(Expr::Num(v));
    }
    flat.sort_by(canonical_cmp);
    if flat.len() == 1 {
        return flat.pop().unwrap();
    }
    Expr::Min(flat)
}

fn lower(e: &Expr, out: &mut Vec<Node>) {
    match e {
        Expr::Num(v) => out.push(Node::Literal(*v)),
        Expr::Var(s) => out.push(Node::Var(s.clone())),
        Expr::Hole(_) => out.push(Node::Const),
        Expr::Sum(ts) => lower_chain(ts, BinaryOp::Add, BinaryOp::Sub, 0.0, out),
        Expr::Prod(fs) => lower_chain(fs, BinaryOp::Mul, BinaryOp::Div, 1.0, out),
        Expr::Min(items) => {
            for _ in 1..items.len() {
                out.push(Node::Binary(BinaryOp::Min));
            }
            for it in items {
                lower(it, out);
            }
        }
        Expr::Pow(a, b) => {
            out.push(Node::Binary(BinaryOp::Pow));
            lower(a, out);
            lower(b, out);
        }
        Expr::Unary(op, a) => {
            out.push(Node::Unary(*op));
            lower(a, out);
        }
    }
}

// Left-associated chain: positives first, then the inverse op for flagged items.
fn lower_chain(items: &[(bool, Expr)], op: BinaryOp, inverse: BinaryOp, identity: f64, out: &mut Vec<Node>) {
    let lead_missing = items.first().is_none_or(|(flag, _)| *flag);
    let n = items.len() + usize::from(lead_missing);
    // pre-order of a left-associated chain: outermost operator first
    let ops: Vec<BinaryOp> = items
        .iter()
        .skip(usize::from(!lead_missing))
        .map(|(flag, _)| if *flag { inverse } else { op })
        .collect();
    debug_assert_eq!(ops.len(), n - 1);
    for o in ops.iter().rev() {
        out.push(Node::Binary(*o));
    }
    if lead_missing {
        out.push(Node::Literal(identity));
    }
    for (_, it) in items {
        lower(it, out);
    }
}

/// Canonical simplified form. Idempotent: `simplify(simplify(t)) == simplify(t)`.
pub fn simplify(tree: &ExpressionTree) -> ExpressionTree {
    let mut current = lower_tree(&normalize(lift(tree, 0).0));
    // lowering can expose folds (e.g. signs on literals); iterate to a fixpoint
    for _ in 0..8 {
        let next = lower_tree(&normalize(lift(&current, 0).0));
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn lower_tree(e: &Expr) -> ExpressionTree {
    let mut nodes = Vec::new();
    lower(e, &mut nodes);
    ExpressionTree::new(nodes).expect("lowering produces a complete tree")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> String {
        simplify(&ExpressionTree::parse_prefix(text, None).unwrap()).to_prefix_string()
    }

    #[test]
    fn cancels_self_difference() {
        assert_eq!(s("+ - v_l v_l ds"), "ds");
    }

    #[test]
    fn drops_identities() {
        assert_eq!(s("* 1 + v_f 0"), "v_f");
    }

    #[test]
    fn folds_parameters() {
        let pool = crate::expr::TokenPool::new(
            vec![
                crate::expr::TokenSpec::binary(BinaryOp::Mul),
                crate::expr::TokenSpec::parameter("b", 4.5),
                crate::expr::TokenSpec::variable("ds"),
            ],
            vec![],
        )
        .unwrap();
        let t = ExpressionTree::parse_prefix("* * 2.0 b ds", Some(&pool)).unwrap();
        assert_eq!(simplify(&t).to_prefix_string(), "* 9.0 ds");
    }

    #[test]
    fn commutative_chains_sort() {
        assert_eq!(s("+ ds v_f"), s("+ v_f ds"));
        assert_eq!(s("* v_l + ds v_f"), s("* + v_f ds v_l"));
        assert_eq!(s("min v_l v_f"), s("min v_f v_l"));
        assert_eq!(s("+ + a b c"), s("+ a + c b"));
    }

    #[test]
    fn division_by_self() {
        assert_eq!(s("/ + a b + b a"), "1.0");
        assert_eq!(s("/ 0 0"), "NaN");
    }

    #[test]
    fn negative_only_sum_and_inverse_only_product() {
        assert_eq!(s("- 0 x"), "- 0.0 x");
        assert_eq!(s("/ 1 x"), "/ 1.0 x");
        assert_eq!(s("neg x"), "- 0.0 x");
    }

    #[test]
    fn is_idempotent_on_examples() {
        for text in [
            "min + v_f 2.6 + v_l / * 9 ds + + v_f v_l 9",
            "- - a b - b a",
            "/ / a b / c d",
            "* 2 * 3 + x * 4 x",
            "min min x 3 min 2 y",
        ] {
            let once = simplify(&ExpressionTree::parse_prefix(text, None).unwrap());
            assert_eq!(simplify(&once), once, "{text}");
        }
    }
}
