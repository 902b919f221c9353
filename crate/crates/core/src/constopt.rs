//! Fitting of constant placeholders: multi-start BFGS on mean squared error
//! with central-difference gradients.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{population_std, Dataset};
use crate::expr::{BinaryOp, EvalError, ExpressionTree, Node, Program};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstFitConfig {
    /// Objective evaluations allowed per start.
    pub max_evals: usize,
    /// Per-placeholder start values; starts are their Cartesian product.
    pub start_values: Vec<f64>,
    pub max_starts: usize,
    /// Bounds for placeholders sitting in a `pow` exponent.
    pub exponent_bounds: (f64, f64),
    pub seed: u64,
}

impl Default for ConstFitConfig {
    fn default() -> Self {
        Self {
            max_evals: 200,
            start_values: vec![0.1, 1.0, 10.0, -1.0],
            max_starts: 8,
            exponent_bounds: (-5.0, 5.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstFitResult {
    pub values: BTreeMap<usize, f64>,
    pub l_e: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Start points for `k` placeholders: the full grid when small, otherwise
/// the diagonal plus seeded picks from the rest of the grid.
pub fn start_points(k: usize, cfg: &ConstFitConfig) -> Vec<Vec<f64>> {
    let m = cfg.start_values.len();
    if k == 0 || m == 0 {
        return vec![vec![0.0; k]];
    }
    let total = (m as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    let point = |mut code: u128| {
        let mut p = Vec::with_capacity(k);
        for _ in 0..k {
            p.push(cfg.start_values[(code % m as u128) as usize]);
            code /= m as u128;
        }
        p
    };
    if total <= cfg.max_starts as u128 {
        return (0..total).map(point).collect();
    }
    let mut starts: Vec<Vec<f64>> = cfg.start_values.iter().map(|&v| vec![v; k]).collect();
    starts.truncate(cfg.max_starts);
    let mut r = rng::stream(cfg.seed, "constopt-starts", k as u64);
    let mut rest: Vec<Vec<f64>> = if total <= 4096 {
        (0..total).map(point).filter(|p| !starts.contains(p)).collect()
    } else {
        use rand::Rng as _;
        (0..64)
            .map(|_| (0..k).map(|_| cfg.start_values[r.random_range(0..m)]).collect())
            .filter(|p| !starts.contains(p))
            .collect()
    };
    rest.shuffle(&mut r);
    let room = cfg.max_starts - starts.len();
    starts.extend(rest.into_iter().take(room));
    starts
}

/// Which slots of `prog` sit in the exponent of a `pow`.
pub fn exponent_slots(tree: &ExpressionTree, prog: &Program) -> Vec<bool> {
    let nodes = tree.preorder();
    let mut exponent = vec![false; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if matches!(n, Node::Binary(BinaryOp::Pow)) {
            let rhs = tree.subtree_end(i + 1);
            exponent[rhs] = true;
        }
    }
    prog.slot_positions().iter().map(|&p| exponent[p]).collect()
}

/// Objective over a fixed set of rows.
pub struct Objective<'a> {
    prog: &'a Program,
    columns: Vec<&'a [f64]>,
    y: &'a [f64],
    bounded: Vec<bool>,
    bounds: (f64, f64),
    evals: usize,
}

impl<'a> Objective<'a> {
    pub fn new(prog: &'a Program, columns: Vec<&'a [f64]>, y: &'a [f64], bounded: Vec<bool>, bounds: (f64, f64)) -> Self {
        Self {
            prog,
            columns,
            y,
            bounded,
            bounds,
            evals: 0,
        }
    }

    fn project(&self, c: &mut [f64]) {
        for (v, &b) in c.iter_mut().zip(&self.bounded) {
            if b {
                *v = v.clamp(self.bounds.0, self.bounds.1);
            }
        }
    }

    /// Mean squared error; `inf` where the expression is not finite.
    pub fn mse(&mut self, c: &[f64]) -> f64 {
        self.evals += 1;
        match self.prog.eval_with(&self.columns, self.y.len(), c) {
            Ok(f) => {
                let s: f64 = f.iter().zip(self.y).map(|(p, t)| (t - p) * (t - p)).sum();
                let m = s / self.y.len() as f64;
                if m.is_finite() {
                    m
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

struct LocalFit {
    c: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn gradient(obj: &mut Objective, c: &[f64]) -> Option<Vec<f64>> {
    let mut g = vec![0.0; c.len()];
    let mut x = c.to_vec();
    for i in 0..c.len() {
        let h = 1e-6 * c[i].abs().max(1.0);
        x[i] = c[i] + h;
        let up = obj.mse(&x);
        x[i] = c[i] - h;
        let down = obj.mse(&x);
        x[i] = c[i];
        if !(up.is_finite() && down.is_finite()) {
            return None;
        }
        g[i] = (up - down) / (2.0 * h);
    }
    Some(g)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn bfgs(obj: &mut Objective, start: &[f64], max_evals: usize) -> LocalFit {
    let k = start.len();
    let budget_end = obj.evals + max_evals;
    let mut c = start.to_vec();
    obj.project(&mut c);
    let mut f = obj.mse(&c);
    let fit = |c: Vec<f64>, f: f64, iterations, converged| LocalFit { c, f, iterations, converged };
    if !f.is_finite() {
        return fit(c, f, 0, false);
    }
    let Some(mut g) = gradient(obj, &c) else {
        return fit(c, f, 0, false);
    };
    // inverse Hessian approximation, row-major
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        h[i * k + i] = 1.0;
    }
    let mut iterations = 0;
    while obj.evals + 2 * k + 1 < budget_end {
        iterations += 1;
        if g.iter().all(|v| v.abs() < 1e-12 * (1.0 + f)) || f < 1e-30 {
            return fit(c, f, iterations, true);
        }
        let mut d: Vec<f64> = (0..k).map(|i| -dot(&h[i * k..(i + 1) * k], &g)).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // not a descent direction: reset to steepest descent
            for i in 0..k {
                for j in 0..k {
                    h[i * k + j] = if i == j { 1.0 } else { 0.0 };
                }
            }
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut next = c.clone();
        let mut f_next = f64::INFINITY;
        let mut accepted = false;
        while obj.evals < budget_end {
            for i in 0..k {
                next[i] = c[i] + step * d[i];
            }
            obj.project(&mut next);
            f_next = obj.mse(&next);
            if f_next.is_finite() && f_next <= f + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
        if !accepted {
            return fit(c, f, iterations, true);
        }
        let improvement = f - f_next;
        let Some(g_next) = gradient(obj, &next) else {
            return fit(next, f_next, iterations, false);
        };
        let s: Vec<f64> = next.iter().zip(&c).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..k).map(|i| dot(&h[i * k..(i + 1) * k], &yv)).collect();
            let yhy = dot(&yv, &hy);
            let rho = 1.0 / sy;
            for i in 0..k {
                for j in 0..k {
                    h[i * k + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        c = next;
        f = f_next;
        g = g_next;
        if improvement <= 1e-14 * (1.0 + f) {
            return fit(c, f, iterations, true);
        }
    }
    fit(c, f, iterations, false)
}

/// Fits the slots of `prog` against `y` over `columns`. Returns the slot
/// values, the mean squared error, iterations used and a convergence flag.
pub fn fit_slots(
    prog: &Program,
    columns: Vec<&[f64]>,
    y: &[f64],
    exponent: Vec<bool>,
    cfg: &ConstFitConfig,
) -> Option<(Vec<f64>, f64, usize, bool)> {
    let k = prog.n_slots();
    let mut obj = Objective::new(prog, columns, y, exponent, cfg.exponent_bounds);
    if k == 0 {
        let f = obj.mse(&[]);
        return f.is_finite().then_some((Vec::new(), f, 0, true));
    }
    let mut best: Option<LocalFit> = None;
    let mut iterations = 0;
    for start in start_points(k, cfg) {
        let local = bfgs(&mut obj, &start, cfg.max_evals);
        iterations += local.iterations;
        if local.f.is_finite() && best.as_ref().is_none_or(|b| local.f < b.f) {
            best = Some(local);
        }
        if best.as_ref().is_some_and(|b| b.f < 1e-28) {
            break;
        }
    }
    best.map(|b| (b.c, b.f, iterations, b.converged))
}

/// Fits every constant placeholder of `tree` to `data`. Errors with
/// [`EvalError::NonFinite`] when no start yields a finite loss.
pub fn fit_constants(tree: &ExpressionTree, data: &Dataset, cfg: &ConstFitConfig) -> Result<ConstFitResult, EvalError> {
    let prog = Program::compile(tree, data.names())?;
    let exponent = exponent_slots(tree, &prog);
    let sigma = population_std(data.target());
    let (c, mse, iterations, converged) =
        fit_slots(&prog, data.column_slices(), data.target(), exponent, cfg).ok_or(EvalError::NonFinite)?;
    let values = prog.slot_positions().iter().copied().zip(c).collect();
    Ok(ConstFitResult {
        values,
        l_e: mse.sqrt() / sigma,
        iterations,
        converged,
    })
}

/// Returns `tree` with its placeholders set to the fitted values.
pub fn fitted_tree(tree: &ExpressionTree, data: &Dataset, cfg: &ConstFitConfig) -> Result<(ExpressionTree, ConstFitResult), EvalError> {
    let fit = fit_constants(tree, data, cfg)?;
    let mut t = tree.clone();
    t.set_constants(fit.values.clone()).expect("slot positions are placeholders");
    Ok((t, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic::{generate_dataset, CarFollowingModel, GenerateConfig};

    fn t(s: &str) -> ExpressionTree {
        ExpressionTree::parse_prefix(s, None).unwrap()
    }

    #[test]
    fn gm_sensitivity() {
        let ds = generate_dataset(&GenerateConfig::for_model(CarFollowingModel::GM_DEFAULT, 2)).unwrap();
        let fit = fit_constants(&t("+ v_f * const - v_l v_f"), &ds, &ConstFitConfig::default()).unwrap();
        assert!((fit.values[&3] - 0.368).abs() < 1e-3, "{:?}", fit);
        assert!(fit.l_e < 1e-6);
    }

    #[test]
    fn no_placeholders() {
        let ds = generate_dataset(&GenerateConfig::default()).unwrap();
        let fit = fit_constants(&t("v_f"), &ds, &ConstFitConfig::default()).unwrap();
        assert!(fit.values.is_empty());
        let direct = crate::reward::nrmse(ds.column("v_f").unwrap(), ds.target()).unwrap();
        assert!((fit.l_e - direct).abs() < 1e-12);
    }

    #[test]
    fn offset_matches_closed_form() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 5.0 + v).collect();
        let ds = Dataset::new(vec!["x".into()], vec![x], y).unwrap();
        let fit = fit_constants(&t("+ const x"), &ds, &ConstFitConfig::default()).unwrap();
        assert!((fit.values[&1] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn linear_least_squares_oracle() {
        // y = 2x + noise-like wiggle; closed form slope = Σxy/Σx²
        let x: Vec<f64> = (1..80).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 2.0 * v + ((i * 7 % 5) as f64 - 2.0) * 0.1).collect();
        let slope = dot(&x, &y) / dot(&x, &x);
        let ds = Dataset::new(vec!["x".into()], vec![x], y).unwrap();
        let fit = fit_constants(&t("* const x"), &ds, &ConstFitConfig::default()).unwrap();
        assert!((fit.values[&1] - slope).abs() < 1e-6, "{} vs {slope}", fit.values[&1]);
    }

    #[test]
    fn exponent_is_clamped() {
        let x: Vec<f64> = (1..40).map(|i| 1.0 + i as f64 / 4.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v.powf(9.0)).collect();
        let ds = Dataset::new(vec!["x".into()], vec![x], y).unwrap();
        let fit = fit_constants(&t("pow x const"), &ds, &ConstFitConfig::default()).unwrap();
        assert!(fit.values[&2] <= 5.0);
    }

    #[test]
    fn all_starts_invalid() {
        let x = vec![0.0, 0.0, 0.0];
        let ds = Dataset::new(vec!["x".into()], vec![x], vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            fit_constants(&t("/ const x"), &ds, &ConstFitConfig::default()),
            Err(EvalError::NonFinite)
        ));
    }

    #[test]
    fn start_grid() {
        let cfg = ConstFitConfig::default();
        assert_eq!(start_points(1, &cfg).len(), 4);
        let two = start_points(2, &cfg);
        assert_eq!(two.len(), 8);
        assert!(two.contains(&vec![10.0, 10.0]));
        assert_eq!(two, start_points(2, &cfg));
        assert_eq!(start_points(3, &cfg).len(), 8);
    }

    #[test]
    fn descent_from_every_start() {
        let ds = generate_dataset(&GenerateConfig::for_model(CarFollowingModel::GM_DEFAULT, 4)).unwrap();
        let tree = t("+ * const v_f * const v_l");
        let prog = Program::compile(&tree, ds.names()).unwrap();
        let cfg = ConstFitConfig::default();
        let fit = fit_constants(&tree, &ds, &cfg).unwrap();
        let sigma = ds.target_std();
        for s in start_points(2, &cfg) {
            let mut obj = Objective::new(&prog, ds.column_slices(), ds.target(), vec![false; 2], cfg.exponent_bounds);
            assert!(fit.l_e <= obj.mse(&s).sqrt() / sigma + 1e-12);
        }
    }
}
