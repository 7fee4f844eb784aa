//! Activity recognizer: one-vs-all logistic models whose per-class sigmoids
//! are normalized into a posterior, or a single binary detector for
//! untrimmed streams. Trained once on fully instantiated descriptors and
//! fixed before policy learning.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::{read_json, write_json};
use crate::error::{Error, Result};
use crate::util::{argmax, dot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    /// One-vs-all sigmoids normalized across classes into `P(y | X)`.
    Multiclass,
    /// Plain sigmoid detector for the untrimmed binary task.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub kind: ClassifierKind,
    /// One weight row per class (a single row for binary); the last
    /// coordinate multiplies the constant-1 bias input.
    pub weights: Vec<Vec<f64>>,
    pub l2: f64,
}

pub const DEFAULT_L2: f64 = 1.0;
const GRAD_TOL: f64 = 1e-6;
const MAX_ITERS: usize = 5000;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(-z))` without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Regularized logistic objective over bias-augmented inputs `xs` with
/// labels `zs` in {-1, +1}. The bias coordinate is not regularized.
pub fn logistic_objective(w: &[f64], xs: &[Vec<f64>], zs: &[f64], l2: f64) -> f64 {
    let data: f64 = xs
        .iter()
        .zip(zs)
        .map(|(x, &z)| log1p_exp_neg(z * dot(w, x)))
        .sum();
    let reg: f64 = w[..w.len() - 1].iter().map(|v| v * v).sum();
    data + 0.5 * l2 * reg
}

/// Analytic gradient of [`logistic_objective`].
pub fn logistic_gradient(w: &[f64], xs: &[Vec<f64>], zs: &[f64], l2: f64) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for (x, &z) in xs.iter().zip(zs) {
        let s = sigmoid(-z * dot(w, x));
        for (gi, &xi) in g.iter_mut().zip(x) {
            *gi -= z * s * xi;
        }
    }
    for (gi, &wi) in g.iter_mut().zip(w).take(w.len() - 1) {
        *gi += l2 * wi;
    }
    g
}

/// Deterministic full-batch gradient descent with backtracking line search.
fn minimize(xs: &[Vec<f64>], zs: &[f64], l2: f64) -> Vec<f64> {
    let dim = xs[0].len();
    let mut w = vec![0.0; dim];
    let mut obj = logistic_objective(&w, xs, zs, l2);
    for _ in 0..MAX_ITERS {
        let g = logistic_gradient(&w, xs, zs, l2);
        let gnorm2 = dot(&g, &g);
        if gnorm2.sqrt() < GRAD_TOL {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - step * gi).collect();
            let trial_obj = logistic_objective(&trial, xs, zs, l2);
            if trial_obj <= obj - 0.5 * step * gnorm2 {
                w = trial;
                obj = trial_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    w
}

fn augment(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.extend_from_slice(x);
    v.push(1.0);
    v
}

/// Trains the recognizer on fully observed descriptors. Multiclass training
/// fits one one-vs-all logistic model per class; binary training fits a
/// single model over labels {0, 1}.
pub fn train_classifier(
    descriptors: &[Vec<f64>],
    labels: &[usize],
    l2: f64,
    kind: ClassifierKind,
) -> Result<LinearClassifier> {
    if descriptors.is_empty() || descriptors.len() != labels.len() {
        return Err(Error::Training(format!(
            "got {} descriptors for {} labels",
            descriptors.len(),
            labels.len()
        )));
    }
    let dim = descriptors[0].len();
    if descriptors.iter().any(|d| d.len() != dim) {
        return Err(Error::Training("descriptors differ in dimension".into()));
    }
    if descriptors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Training("non-finite descriptor entry".into()));
    }
    if l2 < 0.0 {
        return Err(Error::Training(format!("negative l2 strength {l2}")));
    }

    let num_classes = match kind {
        ClassifierKind::Binary => 2,
        ClassifierKind::Multiclass => labels.iter().max().unwrap() + 1,
    };
    for c in 0..num_classes {
        if !labels.contains(&c) {
            return Err(Error::Training(format!("class {c} has zero examples")));
        }
    }
    if kind == ClassifierKind::Binary && labels.iter().any(|&l| l > 1) {
        return Err(Error::Training("binary labels must be 0 or 1".into()));
    }

    let xs: Vec<Vec<f64>> = descriptors.iter().map(|d| augment(d)).collect();
    let rows = match kind {
        ClassifierKind::Binary => 1,
        ClassifierKind::Multiclass => num_classes,
    };
    let mut weights = Vec::with_capacity(rows);
    for c in 0..rows {
        let target = if kind == ClassifierKind::Binary { 1 } else { c };
        let zs: Vec<f64> = labels
            .iter()
            .map(|&l| if l == target { 1.0 } else { -1.0 })
            .collect();
        weights.push(minimize(&xs, &zs, l2));
    }

    Ok(LinearClassifier { kind, weights, l2 })
}

impl LinearClassifier {
    /// Number of classes the posterior is defined over.
    pub fn num_classes(&self) -> usize {
        match self.kind {
            ClassifierKind::Binary => 2,
            ClassifierKind::Multiclass => self.weights.len(),
        }
    }

    /// Descriptor dimensionality expected by the model (without bias).
    pub fn input_dim(&self) -> usize {
        self.weights[0].len() - 1
    }

    fn check_dim(&self, psi: &[f64]) -> Result<()> {
        if psi.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "classifier input",
                expected: self.input_dim(),
                got: psi.len(),
            });
        }
        Ok(())
    }

    /// Posterior over all classes.
    pub fn posteriors(&self, psi: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(psi)?;
        let x = augment(psi);
        match self.kind {
            ClassifierKind::Binary => {
                let p = sigmoid(dot(&self.weights[0], &x));
                Ok(vec![1.0 - p, p])
            }
            ClassifierKind::Multiclass => {
                let scores: Vec<f64> =
                    self.weights.iter().map(|w| sigmoid(dot(w, &x))).collect();
                let total: f64 = scores.iter().sum();
                if total <= 0.0 {
                    // All sigmoids underflowed; fall back to uniform.
                    let l = scores.len() as f64;
                    return Ok(vec![1.0 / l; scores.len()]);
                }
                Ok(scores.into_iter().map(|s| s / total).collect())
            }
        }
    }

    /// `f(psi, y) = P(y | X)` for the specified activity category.
    pub fn posterior(&self, psi: &[f64], y: usize) -> Result<f64> {
        let p = self.posteriors(psi)?;
        p.get(y).copied().ok_or(Error::Dimension {
            context: "classifier class index",
            expected: p.len(),
            got: y,
        })
    }

    /// Argmax over posteriors; ties resolve to the lowest class index.
    pub fn predict(&self, psi: &[f64]) -> Result<usize> {
        let p = self.posteriors(psi)?;
        Ok(argmax(&p).expect("at least one class"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let clf: LinearClassifier = read_json(path.as_ref())?;
        if clf.weights.is_empty() || clf.weights.iter().any(|w| w.len() < 2) {
            return Err(Error::parse(path.as_ref(), "malformed classifier weights"));
        }
        Ok(clf)
    }
}
