//! Equivalence of two expressions: canonical-form match with tolerant
//! numeric leaves, or agreement on points sampled from a dataset.

use rand::Rng as _;

use super::eval::Program;
use super::simplify::simplify;
use super::tree::{ExpressionTree, Node};
use crate::data::Dataset;
use crate::rng;

/// Default number of probe points.
pub const DEFAULT_PROBE_POINTS: usize = 10_000;

/// Points at which two expressions are compared numerically.
///
/// Points are rows drawn (with replacement) from a dataset rather than a box
/// grid over each column's range, because trajectory features are coupled
/// (`ds = s_f - v_l·dt`) and off-manifold points would separate expressions
/// that agree everywhere the data lives.
#[derive(Clone, Debug)]
pub struct EquivalenceDomain {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    target_std: f64,
}

impl EquivalenceDomain {
    pub fn from_dataset(data: &Dataset, points: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, "equivalence-domain", 0);
        let n = data.n_rows();
        let rows: Vec<usize> = if n == 0 {
            Vec::new()
        } else {
            (0..points).map(|_| r.random_range(0..n)).collect()
        };
        let columns = data
            .columns()
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        Self {
            names: data.names().to_vec(),
            columns,
            target_std: crate::data::population_std(data.clean_target()),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest absolute difference between `a` and `b` over the domain, or
    /// `None` when one side is finite where the other is not (or either
    /// references a variable the domain lacks).
    pub fn max_abs_difference(&self, a: &ExpressionTree, b: &ExpressionTree) -> Option<f64> {
        if !a.is_fitted() || !b.is_fitted() {
            return None;
        }
        let pa = Program::compile(&a.inline_constants(), &self.names).ok()?;
        let pb = Program::compile(&b.inline_constants(), &self.names).ok()?;
        let cols: Vec<&[f64]> = self.columns.iter().map(Vec::as_slice).collect();
        let n = self.len();
        if let (Ok(va), Ok(vb)) = (pa.eval_with(&cols, n, &[]), pb.eval_with(&cols, n, &[])) {
            return Some(va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        // some rows are non-finite; compare row by row
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row: Vec<&[f64]> = self.columns.iter().map(|c| std::slice::from_ref(&c[i])).collect();
            match (pa.eval_with(&row, 1, &[]), pb.eval_with(&row, 1, &[])) {
                (Ok(x), Ok(y)) => worst = worst.max((x[0] - y[0]).abs()),
                (Err(_), Err(_)) => {}
                _ => return None,
            }
        }
        Some(worst)
    }
}

/// Canonical forms match token for token, with literals within `tol`.
pub fn structurally_equivalent(a: &ExpressionTree, b: &ExpressionTree, tol: f64) -> bool {
    let sa = simplify(a);
    let sb = simplify(b);
    sa.complexity() == sb.complexity()
        && sa.preorder().iter().zip(sb.preorder()).all(|(x, y)| match (x, y) {
            (Node::Literal(u), Node::Literal(v)) => (u - v).abs() <= tol || (u.is_nan() && v.is_nan()),
            _ => x == y,
        })
}

/// True when the expressions match structurally, or when they differ by less
/// than `tol·(1 + σ_y)` everywhere on `domain`.
pub fn equivalent(a: &ExpressionTree, b: &ExpressionTree, tol: f64, domain: Option<&EquivalenceDomain>) -> bool {
    if structurally_equivalent(a, b, tol) {
        return true;
    }
    match domain {
        Some(d) if !d.is_empty() => d
            .max_abs_difference(a, b)
            .is_some_and(|m| m < tol * (1.0 + d.target_std)),
        _ => false,
    }
}
