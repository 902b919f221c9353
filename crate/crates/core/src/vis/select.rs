use serde::{Deserialize, Serialize};

/// One variable subset with its strength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionEntry {
    pub variables: Vec<String>,
    pub strength: f64,
    pub log_strength: f64,
}

impl InteractionEntry {
    pub fn new(variables: Vec<String>, strength: f64) -> Self {
        Self {
            log_strength: strength.max(f64::MIN_POSITIVE).ln(),
            variables,
            strength,
        }
    }

    pub fn label(&self) -> String {
        if self.variables.len() == 1 {
            self.variables[0].clone()
        } else {
            format!("({})", self.variables.join(", "))
        }
    }
}

/// A recommended scenario: a list of variable combinations.
pub type Scenario = Vec<Vec<String>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum SelectionMode {
    /// Cut at the `cuts` largest gaps in sorted log-strength.
    AutoElbow { cuts: usize },
    /// One scenario with every entry at or above the log-strength threshold.
    Threshold { log_strength: f64 },
    Manual { scenarios: Vec<Scenario> },
}

impl Default for SelectionMode {
    fn default() -> Self {
        SelectionMode::AutoElbow { cuts: 5 }
    }
}

/// Gaps smaller than this fraction of the largest gap are never cut.
pub const MIN_GAP_FRACTION: f64 = 0.1;

/// Positions `i` (cut between entry `i` and `i+1`) of the elbow cuts,
/// ascending. `log_strengths` must be sorted descending.
pub fn elbow_cuts(log_strengths: &[f64], k: usize) -> Vec<usize> {
    let gaps: Vec<f64> = log_strengths.windows(2).map(|w| w[0] - w[1]).collect();
    let max = gaps.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 || !max.is_finite() {
        return Vec::new();
    }
    // quantize so that numerically equal gaps tie and fall back to index order
    let key = |g: f64| (g / max * 1e9).round() as i64;
    let mut candidates: Vec<usize> = (0..gaps.len()).filter(|&i| gaps[i] >= MIN_GAP_FRACTION * max).collect();
    candidates.sort_by(|&a, &b| key(gaps[b]).cmp(&key(gaps[a])).then(a.cmp(&b)));
    candidates.truncate(k);
    candidates.sort_unstable();
    candidates
}

/// Groups sorted entries into elbow sets. Entries below the last cut are
/// left out.
pub fn elbow_sets(entries: &[InteractionEntry], k: usize) -> Vec<Vec<InteractionEntry>> {
    let logs: Vec<f64> = entries.iter().map(|e| e.log_strength).collect();
    let cuts = elbow_cuts(&logs, k);
    if cuts.len() < k {
        log::warn!("only {} elbow cuts available, {} requested", cuts.len(), k);
    }
    let mut sets = Vec::new();
    let mut start = 0;
    for c in cuts {
        sets.push(entries[start..=c].to_vec());
        start = c + 1;
    }
    sets
}

/// Turns elbow sets into nested scenarios. A top set holding only single
/// variables is merged with the set below it.
pub fn scenarios_from_sets(mut sets: Vec<Vec<InteractionEntry>>) -> Vec<Scenario> {
    if sets.len() > 1 && sets[0].iter().all(|e| e.variables.len() == 1) {
        let next = sets.remove(1);
        sets[0].extend(next);
    }
    let mut out = Vec::new();
    let mut acc: Scenario = Vec::new();
    for set in sets {
        acc.extend(set.into_iter().map(|e| e.variables));
        out.push(acc.clone());
    }
    out
}

/// Recommended scenarios for entries sorted by descending log-strength.
pub fn select_interactions(entries: &[InteractionEntry], mode: &SelectionMode) -> Vec<Scenario> {
    match mode {
        SelectionMode::AutoElbow { cuts } => scenarios_from_sets(elbow_sets(entries, *cuts)),
        SelectionMode::Threshold { log_strength } => {
            let s: Scenario = entries
                .iter()
                .filter(|e| e.log_strength >= *log_strength)
                .map(|e| e.variables.clone())
                .collect();
            if s.is_empty() {
                Vec::new()
            } else {
                vec![s]
            }
        }
        SelectionMode::Manual { scenarios } => scenarios.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(pairs: &[(&str, f64)]) -> Vec<InteractionEntry> {
        pairs
            .iter()
            .map(|(n, s)| InteractionEntry::new(n.split(',').map(String::from).collect(), *s))
            .collect()
    }

    #[test]
    fn obvious_gap() {
        let e = entries(&[("a", 100.0), ("b", 90.0), ("c", 1.0), ("d", 0.9)]);
        assert_eq!(elbow_cuts(&e.iter().map(|x| x.log_strength).collect::<Vec<_>>(), 4), vec![1]);
        let sets = elbow_sets(&e, 4);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].len(), 2);
    }

    #[test]
    fn geometric_decay_ties_break_by_index() {
        let logs: Vec<f64> = (0..8).map(|i| -(i as f64) * 0.7).collect();
        assert_eq!(elbow_cuts(&logs, 3), vec![0, 1, 2]);
    }

    #[test]
    fn scale_invariance() {
        let base = entries(&[("a", 50.0), ("b", 7.0), ("a,b", 3.0), ("c", 0.2), ("a,c", 0.01)]);
        let scaled: Vec<_> = base
            .iter()
            .map(|e| InteractionEntry::new(e.variables.clone(), e.strength * 1234.5))
            .collect();
        let mode = SelectionMode::AutoElbow { cuts: 3 };
        assert_eq!(select_interactions(&base, &mode), select_interactions(&scaled, &mode));
    }

    #[test]
    fn singleton_top_set_is_merged() {
        let e = entries(&[("a", 1000.0), ("b", 10.0), ("a,b", 9.0), ("c", 0.1)]);
        let sc = select_interactions(&e, &SelectionMode::AutoElbow { cuts: 2 });
        assert_eq!(sc.len(), 1);
        assert_eq!(sc[0].len(), 3);
    }

    #[test]
    fn krauss_reference_strengths() {
        let e = entries(&[
            ("v_f", 347.07),
            ("v_l", 15.12),
            ("ds", 11.12),
            ("ds,v_l,v_f", 9.60),
            ("ds,v_l", 5.59),
            ("v_l,v_f", 3.21),
            ("ds,v_f", 3.04),
            ("ds,s_f", 0.41),
            ("s_f", 0.29),
            ("v_l,s_f", 0.28),
            ("ds,v_l,s_f", 0.13),
            ("v_l,s_f,v_f", 0.09),
            ("s_f,v_f", 0.09),
            ("ds,s_f,v_f", 0.07),
            ("ds,v_l,s_f,v_f", 0.06),
        ]);
        let sc = select_interactions(&e, &SelectionMode::default());
        let labels: Vec<String> = sc[0].iter().map(|v| v.join(",")).collect();
        assert_eq!(labels, ["v_f", "v_l", "ds", "ds,v_l,v_f"]);
    }

    #[test]
    fn threshold_mode() {
        let e = entries(&[("a", 100.0), ("b", 2.0), ("c", 0.5)]);
        let sc = select_interactions(&e, &SelectionMode::Threshold { log_strength: 0.0 });
        assert_eq!(sc, vec![vec![vec!["a".to_string()], vec!["b".to_string()]]]);
    }
}
