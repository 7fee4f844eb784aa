//! Comparison selectors: Passive, Object-Preference, and decision-tree
//! orderings (DT-Static / DT-Top).

use serde::{Deserialize, Serialize};

use crate::dtree::train_decision_tree;
use crate::env::ActionSet;
use crate::error::Result;
use crate::qpolicy::ActionId;
use crate::selector::Selector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingMode {
    /// Cycle the full ranked list (DT-Static).
    Cycle,
    /// Repeatedly apply only the top `P` actions (DT-Top).
    TopP(usize),
    /// Uniform random legal action (Passive).
    Random,
    /// Frequency-of-response ranking (Object-Preference).
    Preference,
}

/// A ranked action list with the policy for replaying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticOrdering {
    pub ranked: Vec<ActionId>,
    pub mode: OrderingMode,
}

impl StaticOrdering {
    pub fn into_selector(self) -> Selector {
        match self.mode {
            OrderingMode::Random => Selector::Passive,
            OrderingMode::TopP(_) => Selector::TopSet {
                ranked: self.ranked,
            },
            OrderingMode::Cycle | OrderingMode::Preference => Selector::StaticOrder {
                ranked: self.ranked,
            },
        }
    }
}

/// The passive baseline: a uniformly random legal action each step. The
/// returned selector draws from a per-episode seeded generator, so batch
/// episodes realize a uniform permutation of the action set.
pub fn passive_selector() -> Selector {
    Selector::Passive
}

/// Object-Preference ordering: `score(a_m)` is the largest per-activity
/// mean of the action's full observations; actions are ranked descending
/// with index-order ties. `observations` is the full-observation action
/// matrix of the training set (rows = videos).
pub fn object_pref_order(
    observations: &[Vec<f64>],
    labels: &[usize],
    actions: &ActionSet,
) -> StaticOrdering {
    let detect = actions.detect_ids();
    let num_activities = labels.iter().max().map_or(0, |&l| l + 1);
    let mut scores: Vec<(ActionId, f64)> = detect
        .iter()
        .map(|&m| {
            let mut best = f64::NEG_INFINITY;
            for activity in 0..num_activities {
                let mut sum = 0.0;
                let mut count = 0usize;
                for (row, &label) in observations.iter().zip(labels) {
                    if label == activity {
                        sum += row[m];
                        count += 1;
                    }
                }
                if count > 0 {
                    best = best.max(sum / count as f64);
                }
            }
            (m, best)
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    StaticOrdering {
        ranked: scores.into_iter().map(|(m, _)| m).collect(),
        mode: OrderingMode::Preference,
    }
}

/// Ranks detect actions by CART Gini importance (descending, index-order
/// ties) and returns the importances alongside.
pub fn dt_importance_order(
    observations: &[Vec<f64>],
    labels: &[usize],
    actions: &ActionSet,
) -> Result<(StaticOrdering, Vec<f64>)> {
    let detect = actions.detect_ids();
    let rows: Vec<Vec<f64>> = observations
        .iter()
        .map(|row| detect.iter().map(|&m| row[m]).collect())
        .collect();
    let tree = train_decision_tree(&rows, labels)?;
    let mut full = vec![0.0; actions.len()];
    for (i, &m) in detect.iter().enumerate() {
        full[m] = tree.importances[i];
    }
    let mut ranked: Vec<ActionId> = detect.clone();
    ranked.sort_by(|&a, &b| full[b].total_cmp(&full[a]).then(a.cmp(&b)));
    Ok((
        StaticOrdering {
            ranked,
            mode: OrderingMode::Cycle,
        },
        full,
    ))
}

/// Builds the two decision-tree selectors from an importance-ranked
/// ordering: DT-Static cycles the full list, DT-Top repeats the top `p`
/// actions only ('p' matches the detector framerate in the streaming
/// experiments). `p` larger than the list clamps with a warning.
pub fn dt_selectors(ranked: &StaticOrdering, p: usize) -> (StaticOrdering, StaticOrdering) {
    let dt_static = StaticOrdering {
        ranked: ranked.ranked.clone(),
        mode: OrderingMode::Cycle,
    };
    let p_eff = if p > ranked.ranked.len() {
        log::warn!(
            "top-{p} requested but only {} actions are ranked; clamping",
            ranked.ranked.len()
        );
        ranked.ranked.len()
    } else {
        p.max(1)
    };
    let dt_top = StaticOrdering {
        ranked: ranked.ranked[..p_eff].to_vec(),
        mode: OrderingMode::TopP(p_eff),
    };
    (dt_static, dt_top)
}
