//! Vectorized evaluation. A tree is compiled once against a list of column
//! names; the resulting [`Program`] evaluates whole columns at a time.

use super::token::{BinaryOp, UnaryOp};
use super::tree::{ExpressionTree, Node};
use crate::data::Dataset;
use crate::error::Error;

/// Why an evaluation produced no values.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("constant placeholder at position {0} has no value")]
    UnfittedConstant(usize),
    /// Division by zero, overflow, or any other non-finite intermediate.
    /// Callers treat the candidate as invalid rather than failing.
    #[error("non-finite value during evaluation")]
    NonFinite,
}

impl EvalError {
    /// Soft failures mark a candidate invalid; hard failures are caller bugs.
    pub fn is_soft(&self) -> bool {
        matches!(self, EvalError::NonFinite)
    }
}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnboundVariable(v) => Error::UnboundVariable(v),
            EvalError::UnfittedConstant(p) => Error::UnfittedConstant(p),
            EvalError::NonFinite => Error::Malformed("non-finite evaluation".into()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Instr {
    Column(usize),
    Number(f64),
    /// Index into the slot vector passed at evaluation time.
    Slot(usize),
    Binary(BinaryOp),
    Unary(UnaryOp),
}

/// A compiled expression. Instructions are stored in reverse pre-order, which
/// evaluates as a postfix stack machine.
#[derive(Clone, Debug)]
pub struct Program {
    instrs: Vec<Instr>,
    slot_positions: Vec<usize>,
    slot_values: Vec<Option<f64>>,
}

enum Operand<'a> {
    Scalar(f64),
    Column(&'a [f64]),
    Buffer(Vec<f64>),
}

impl Operand<'_> {
    #[inline]
    fn get(&self, i: usize) -> f64 {
        match self {
            Operand::Scalar(v) => *v,
            Operand::Column(c) => c[i],
            Operand::Buffer(b) => b[i],
        }
    }
}

impl Program {
    /// Compiles `tree` against column `names`. Constant placeholders become
    /// slots, pre-filled with any fitted values the tree carries.
    pub fn compile<S: AsRef<str>>(tree: &ExpressionTree, names: &[S]) -> Result<Program, EvalError> {
        let nodes = tree.preorder();
        let mut instrs = Vec::with_capacity(nodes.len());
        let mut slot_positions = Vec::new();
        let mut slot_values = Vec::new();
        let mut slot_of = vec![usize::MAX; nodes.len()];
        for (pos, n) in nodes.iter().enumerate() {
            if matches!(n, Node::Const) {
                slot_of[pos] = slot_positions.len();
                slot_positions.push(pos);
                slot_values.push(tree.constants().get(&pos).copied());
            }
        }
        for (pos, n) in nodes.iter().enumerate().rev() {
            instrs.push(match n {
                Node::Binary(op) => Instr::Binary(*op),
                Node::Unary(op) => Instr::Unary(*op),
                Node::Var(s) => {
                    let col = names
                        .iter()
                        .position(|c| c.as_ref() == &**s)
                        .ok_or_else(|| EvalError::UnboundVariable(s.to_string()))?;
                    Instr::Column(col)
                }
                Node::Param(_, v) | Node::Literal(v) => Instr::Number(*v),
                Node::Const => Instr::Slot(slot_of[pos]),
            });
        }
        Ok(Program {
            instrs,
            slot_positions,
            slot_values,
        })
    }

    pub fn n_slots(&self) -> usize {
        self.slot_positions.len()
    }

    /// Pre-order positions of the slots, in slot order.
    pub fn slot_positions(&self) -> &[usize] {
        &self.slot_positions
    }

    /// Evaluates with the tree's own fitted constants.
    pub fn eval(&self, columns: &[&[f64]], n: usize) -> Result<Vec<f64>, EvalError> {
        let mut slots = Vec::with_capacity(self.slot_values.len());
        for (i, v) in self.slot_values.iter().enumerate() {
            slots.push(v.ok_or(EvalError::UnfittedConstant(self.slot_positions[i]))?);
        }
        self.eval_with(columns, n, &slots)
    }

    /// Evaluates with explicit slot values.
    pub fn eval_with(&self, columns: &[&[f64]], n: usize, slots: &[f64]) -> Result<Vec<f64>, EvalError> {
        debug_assert_eq!(slots.len(), self.slot_positions.len());
        let mut stack: Vec<Operand> = Vec::with_capacity(8);
        let mut spare: Vec<Vec<f64>> = Vec::new();
        for instr in &self.instrs {
            match *instr {
                Instr::Column(c) => stack.push(Operand::Column(&columns[c][..n])),
                Instr::Number(v) => stack.push(Operand::Scalar(v)),
                Instr::Slot(s) => stack.push(Operand::Scalar(slots[s])),
                Instr::Unary(op) => {
                    let a = stack.pop().expect("well-formed program");
                    let out = match a {
                        Operand::Scalar(v) => {
                            let r = op.apply(v);
                            if !r.is_finite() {
                                return Err(EvalError::NonFinite);
                            }
                            Operand::Scalar(r)
                        }
                        Operand::Buffer(mut b) => {
                            let mut ok = true;
                            for x in b.iter_mut() {
                                *x = op.apply(*x);
                                ok &= x.is_finite();
                            }
                            if !ok {
                                return Err(EvalError::NonFinite);
                            }
                            Operand::Buffer(b)
                        }
                        Operand::Column(c) => {
                            let mut b = spare.pop().unwrap_or_default();
                            b.clear();
                            b.extend(c.iter().map(|&x| op.apply(x)));
                            if !b.iter().all(|x| x.is_finite()) {
                                return Err(EvalError::NonFinite);
                            }
                            Operand::Buffer(b)
                        }
                    };
                    stack.push(out);
                }
                Instr::Binary(op) => {
                    // reverse pre-order: the first child is on top
                    let a = stack.pop().expect("well-formed program");
                    let b = stack.pop().expect("well-formed program");
                    let out = match (a, b) {
                        (Operand::Scalar(x), Operand::Scalar(y)) => {
                            let r = op.apply(x, y);
                            if !r.is_finite() {
                                return Err(EvalError::NonFinite);
                            }
                            Operand::Scalar(r)
                        }
                        (Operand::Buffer(mut buf), other) => {
                            if !binary_in_place(op, &mut buf, |i| other.get(i), true) {
                                return Err(EvalError::NonFinite);
                            }
                            if let Operand::Buffer(o) = other {
                                spare.push(o);
                            }
                            Operand::Buffer(buf)
                        }
                        (other, Operand::Buffer(mut buf)) => {
                            if !binary_in_place(op, &mut buf, |i| other.get(i), false) {
                                return Err(EvalError::NonFinite);
                            }
                            Operand::Buffer(buf)
                        }
                        (a, b) => {
                            let mut buf = spare.pop().unwrap_or_default();
                            buf.clear();
                            let mut ok = true;
                            buf.extend((0..n).map(|i| {
                                let r = op.apply(a.get(i), b.get(i));
                                ok &= r.is_finite();
                                r
                            }));
                            if !ok {
                                return Err(EvalError::NonFinite);
                            }
                            Operand::Buffer(buf)
                        }
                    };
                    stack.push(out);
                }
            }
        }
        match stack.pop().expect("well-formed program") {
            Operand::Scalar(v) => Ok(vec![v; n]),
            Operand::Column(c) => Ok(c.to_vec()),
            Operand::Buffer(b) => Ok(b),
        }
    }
}

// `buf` holds the left operand when `buf_is_lhs`, otherwise the right one.
#[inline]
fn binary_in_place(op: BinaryOp, buf: &mut [f64], other: impl Fn(usize) -> f64, buf_is_lhs: bool) -> bool {
    let mut ok = true;
    for (i, x) in buf.iter_mut().enumerate() {
        let r = if buf_is_lhs { op.apply(*x, other(i)) } else { op.apply(other(i), *x) };
        ok &= r.is_finite();
        *x = r;
    }
    ok
}

/// Row-wise evaluation of `tree` on a dataset.
pub fn evaluate(tree: &ExpressionTree, data: &Dataset) -> Result<Vec<f64>, EvalError> {
    let prog = Program::compile(tree, data.names())?;
    prog.eval(&data.column_slices(), data.n_rows())
}

/// Evaluates at a single point given as `(name, value)` pairs.
pub fn evaluate_point(tree: &ExpressionTree, names: &[&str], values: &[f64]) -> Result<f64, EvalError> {
    let prog = Program::compile(tree, names)?;
    let cols: Vec<&[f64]> = values.iter().map(std::slice::from_ref).collect();
    Ok(prog.eval(&cols, 1)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAMES: [&str; 4] = ["v_f", "v_l", "s_f", "ds"];

    fn at(text: &str, row: [f64; 4]) -> Result<f64, EvalError> {
        let t = ExpressionTree::parse_prefix(text, None).unwrap();
        evaluate_point(&t, &NAMES, &row)
    }

    #[test]
    fn simplified_krauss_hand_value() {
        let v = at("min + v_f 2.6 + v_l / * 9 ds + + v_f v_l 9", [10.0, 10.0, 30.0, 20.0]).unwrap();
        assert!((v - 12.6).abs() < 1e-12);
        let vs = at("+ v_l / * 9 ds + + v_f v_l 9", [10.0, 10.0, 30.0, 20.0]).unwrap();
        assert!((vs - (10.0 + 180.0 / 29.0)).abs() < 1e-12);
    }

    #[test]
    fn identity_returns_the_column() {
        let t = ExpressionTree::parse_prefix("v_f", None).unwrap();
        let cols: [&[f64]; 4] = [&[1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]];
        let p = Program::compile(&t, &NAMES).unwrap();
        assert_eq!(p.eval(&cols, 2).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn division_by_zero_is_a_soft_failure() {
        let e = at("/ ds - v_f v_f", [3.0, 1.0, 2.0, 4.0]).unwrap_err();
        assert_eq!(e, EvalError::NonFinite);
        assert!(e.is_soft());
    }

    #[test]
    fn min_does_not_hide_non_finite_branches() {
        // 1/0 = inf; min(inf, x) would silently be x without the intermediate check
        assert_eq!(at("min / v_f - v_l v_l v_l", [1.0, 1.0, 0.0, 0.0]), Err(EvalError::NonFinite));
    }

    #[test]
    fn unbound_and_unfitted_are_hard_failures() {
        let t = ExpressionTree::parse_prefix("+ x v_f", None).unwrap();
        let e = Program::compile(&t, &NAMES).unwrap_err();
        assert_eq!(e, EvalError::UnboundVariable("x".into()));
        assert!(!e.is_soft());
        assert_eq!(at("* c v_f", [1.0; 4]), Err(EvalError::UnfittedConstant(1)));
    }

    #[test]
    fn slots_and_operand_orders() {
        let t = ExpressionTree::parse_prefix("- c / v_f c", None).unwrap();
        let p = Program::compile(&t, &NAMES).unwrap();
        assert_eq!(p.slot_positions(), &[1, 4]);
        let cols: [&[f64]; 4] = [&[8.0, 4.0], &[0.0; 2], &[0.0; 2], &[0.0; 2]];
        assert_eq!(p.eval_with(&cols, 2, &[10.0, 2.0]).unwrap(), vec![6.0, 8.0]);
        // buffer on the right of a non-commutative op
        assert_eq!(at("- 1 * v_f v_l", [2.0, 3.0, 0.0, 0.0]).unwrap(), -5.0);
        assert_eq!(at("/ * v_f v_l - v_l v_f", [2.0, 3.0, 0.0, 0.0]).unwrap(), 6.0);
        assert_eq!(at("pow s_f 2", [0.0, 0.0, 3.0, 0.0]).unwrap(), 9.0);
    }
}
