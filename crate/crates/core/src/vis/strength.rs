use rand::seq::index::sample;
use rayon::prelude::*;

use super::refnet::RefNet;
use crate::data::Dataset;
use crate::rng;

/// Central finite-difference estimate of the mixed partial of `f` over the
/// coordinates `dims` at `z`, with step `h` on each coordinate.
pub fn mixed_partial(f: impl Fn(&[f64]) -> f64, z: &[f64], dims: &[usize], h: &[f64]) -> f64 {
    let m = dims.len();
    let mut point = z.to_vec();
    let mut acc = 0.0;
    for mask in 0..(1usize << m) {
        let mut sign = 1.0;
        for (bit, (&d, &step)) in dims.iter().zip(h).enumerate() {
            if mask >> bit & 1 == 1 {
                point[d] = z[d] + step;
            } else {
                point[d] = z[d] - step;
                sign = -sign;
            }
        }
        acc += sign * f(&point);
    }
    let denom: f64 = h.iter().map(|s| 2.0 * s).product();
    acc / denom
}

/// Rows at which strengths are probed (without replacement when possible).
pub fn probe_rows(data: &Dataset, probes: usize, seed: u64) -> Vec<usize> {
    let n = data.n_rows();
    let mut r = rng::stream(seed, "vis-probes", 0);
    if probes >= n {
        return (0..n).collect();
    }
    let mut rows = sample(&mut r, n, probes).into_vec();
    rows.sort_unstable();
    rows
}

/// Mean squared mixed partial of the network over `subset` at the given probe
/// rows, in the data's own units. `h` is the step in standard deviations.
pub fn interaction_strength(net: &RefNet, subset: &[usize], data: &Dataset, rows: &[usize], h: f64) -> f64 {
    let steps = vec![h; subset.len()];
    let (_, x_std) = net.input_stats();
    let (_, y_std) = net.target_stats();
    let scale = subset.iter().fold(y_std, |acc, &i| acc / x_std[i]);
    let total: f64 = rows
        .par_iter()
        .map(|&i| {
            let z = net.standardize(&data.row(i));
            let d = scale * mixed_partial(|p| net.forward_standardized(p), &z, subset, &steps);
            d * d
        })
        .sum();
    total / rows.len().max(1) as f64
}

/// All non-empty subsets of `0..n` with at most `max_order` members, in
/// order of size then lexicographic.
pub fn subsets(n: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect::<Vec<_>>())
        .filter(|s: &Vec<usize>| s.len() <= max_order)
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_partials() {
        let f = |p: &[f64]| p[0] * p[1] + p[0] * p[0] * p[2];
        let z = [1.0, 2.0, 3.0];
        assert!((mixed_partial(f, &z, &[0], &[1e-3]) - 8.0).abs() < 1e-6);
        assert!((mixed_partial(f, &z, &[0, 1], &[1e-3, 1e-3]) - 1.0).abs() < 1e-6);
        assert!(mixed_partial(f, &z, &[1, 2], &[1e-3, 1e-3]).abs() < 1e-6);
    }

    #[test]
    fn subset_enumeration() {
        let s = subsets(4, 4);
        assert_eq!(s.len(), 15);
        assert_eq!(s[0], vec![0]);
        assert_eq!(s[14], vec![0, 1, 2, 3]);
        assert_eq!(subsets(4, 2).len(), 10);
    }
}
