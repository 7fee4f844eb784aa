//! Binary CART classifier with Gini impurity splits and normalized Gini
//! feature importances. Backs the static decision-tree feature orderings.

use crate::error::{Error, Result};

pub const MAX_DEPTH: usize = 12;
pub const MIN_LEAF: usize = 2;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    /// Per-feature Gini importance: total weighted impurity decrease over
    /// the feature's split nodes, normalized to sum one. All zeros when the
    /// tree has no splits.
    pub importances: Vec<f64>,
    pub num_features: usize,
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    num_classes: usize,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl Builder<'_> {
    fn class_counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        counts
    }

    /// Best (feature, threshold) by weighted child impurity; thresholds are
    /// midpoints between consecutive distinct values. Ties resolve to the
    /// lower feature index, then the lower threshold.
    fn best_split(&self, rows: &[usize], node_gini: f64) -> Option<(usize, f64, f64)> {
        let n = rows.len();
        let mut best: Option<(usize, f64, f64)> = None;
        for feature in 0..self.x[0].len() {
            let mut order: Vec<usize> = rows.to_vec();
            order.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]));

            let mut left_counts = vec![0usize; self.num_classes];
            let mut right_counts = self.class_counts(rows);
            for split_at in 1..n {
                let r = order[split_at - 1];
                left_counts[self.y[r]] += 1;
                right_counts[self.y[r]] -= 1;
                let lo = self.x[order[split_at - 1]][feature];
                let hi = self.x[order[split_at]][feature];
                if lo == hi {
                    continue;
                }
                if split_at < MIN_LEAF || n - split_at < MIN_LEAF {
                    continue;
                }
                let threshold = 0.5 * (lo + hi);
                let w_left = split_at as f64 / n as f64;
                let impurity = w_left * gini(&left_counts, split_at)
                    + (1.0 - w_left) * gini(&right_counts, n - split_at);
                let gain = node_gini - impurity;
                if gain <= 1e-12 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((_, _, bg)) => gain > bg + 1e-15,
                };
                if better {
                    best = Some((feature, threshold, gain));
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize, total: usize) -> usize {
        let counts = self.class_counts(&rows);
        let node_gini = gini(&counts, rows.len());
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;

        let split = if pure || depth >= MAX_DEPTH || rows.len() < 2 * MIN_LEAF {
            None
        } else {
            self.best_split(&rows, node_gini)
        };

        match split {
            None => {
                self.nodes.push(Node::Leaf {
                    class: majority(&counts),
                });
                self.nodes.len() - 1
            }
            Some((feature, threshold, gain)) => {
                self.importance[feature] += rows.len() as f64 / total as f64 * gain;
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .into_iter()
                    .partition(|&r| self.x[r][feature] <= threshold);
                let idx = self.nodes.len();
                self.nodes.push(Node::Leaf { class: 0 }); // placeholder
                let left = self.build(left_rows, depth + 1, total);
                let right = self.build(right_rows, depth + 1, total);
                self.nodes[idx] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                idx
            }
        }
    }
}

/// Grows a CART on attribute rows `x` with class labels `y`.
pub fn train_decision_tree(x: &[Vec<f64>], y: &[usize]) -> Result<DecisionTree> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Training(format!(
            "got {} attribute rows for {} labels",
            x.len(),
            y.len()
        )));
    }
    let num_features = x[0].len();
    if num_features == 0 || x.iter().any(|r| r.len() != num_features) {
        return Err(Error::Training("inconsistent attribute rows".into()));
    }
    let num_classes = y.iter().max().unwrap() + 1;

    let mut builder = Builder {
        x,
        y,
        num_classes,
        nodes: Vec::new(),
        importance: vec![0.0; num_features],
    };
    builder.build((0..x.len()).collect(), 0, x.len());

    let total: f64 = builder.importance.iter().sum();
    let importances = if total > 0.0 {
        builder.importance.iter().map(|v| v / total).collect()
    } else {
        builder.importance.clone()
    };
    Ok(DecisionTree {
        nodes: builder.nodes,
        importances,
        num_features,
    })
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.num_features {
            return Err(Error::Dimension {
                context: "decision tree input",
                expected: self.num_features,
                got: x.len(),
            });
        }
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return Ok(*class),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn num_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }
}
