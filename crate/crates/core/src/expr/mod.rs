//! Expressions: tokens and pools, pre-order trees, evaluation,
//! simplification and equivalence.

mod equiv;
mod eval;
mod pool;
mod simplify;
mod token;
mod tree;

pub use equiv::{equivalent, structurally_equivalent, EquivalenceDomain, DEFAULT_PROBE_POINTS};
pub use eval::{evaluate, evaluate_point, EvalError, Program};
pub use pool::{PrefixState, SamplingConstraint, SlotContext, TokenPool, DEFAULT_MAX_LENGTH};
pub use simplify::simplify;
pub use token::{BinaryOp, TokenKind, TokenSpec, UnaryOp, CONSTANT_NAME};
pub use tree::{subtree_end, ExpressionTree, Node, Symbol};

/// Complexity of an expression: its number of pre-order tokens.
pub fn complexity(tree: &ExpressionTree) -> usize {
    tree.complexity()
}
