//! State-action featurization, linear Q-models, discounted returns, ridge
//! fitting, epsilon-greedy selection, and the outer policy-iteration loop.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::io::{read_json, write_json};
use crate::data::Dataset;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::selector::Selector;
use crate::util::{derive_seed, dot};

pub type ActionId = usize;

/// How the action-history feature encodes past actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistoryMode {
    /// Batch: actions happen at one notional time, so recency degenerates to
    /// a performed/not-performed indicator.
    BinaryIndicator,
    /// Streaming: time since the action was last performed, zero if never.
    Recency,
}

/// Times at which each action was last performed within one episode.
#[derive(Debug, Clone)]
pub struct ActionHistory {
    last_time: Vec<Option<u64>>,
}

impl ActionHistory {
    pub fn new(num_actions: usize) -> Self {
        ActionHistory {
            last_time: vec![None; num_actions],
        }
    }

    pub fn record(&mut self, action: ActionId, time: u64) {
        self.last_time[action] = Some(time);
    }

    pub fn performed(&self, action: ActionId) -> bool {
        self.last_time[action].is_some()
    }

    pub fn last_time_of(&self, action: ActionId) -> Option<u64> {
        self.last_time[action]
    }

    /// The recency vector `dt(m) = t_now - max{t : a = a_m}`, zero for
    /// never-performed actions. Note the collision inherited from the
    /// recency definition: an action performed exactly at `t_now` is
    /// indistinguishable from one never performed.
    pub fn delta_t(&self, t_now: u64, mode: HistoryMode) -> Vec<f64> {
        self.last_time
            .iter()
            .map(|last| match (mode, last) {
                (_, None) => 0.0,
                (HistoryMode::BinaryIndicator, Some(_)) => 1.0,
                (HistoryMode::Recency, Some(t)) => (t_now - t) as f64,
            })
            .collect()
    }
}

/// The feature `phi(s, a) = [psi(X^k), dt^k]` of length `N + M`. The action
/// itself is encoded by the per-action weight vectors of [`QModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionFeature(pub(crate) Vec<f64>);

impl StateActionFeature {
    pub fn new(values: Vec<f64>) -> Self {
        StateActionFeature(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Concatenates the current descriptor with the action-history feature.
pub fn state_action_features(
    psi: &[f64],
    history: &ActionHistory,
    t_now: u64,
    mode: HistoryMode,
) -> StateActionFeature {
    let mut v = Vec::with_capacity(psi.len() + history.last_time.len());
    v.extend_from_slice(psi);
    v.extend(history.delta_t(t_now, mode));
    StateActionFeature(v)
}

/// Per-action linear Q-model: `Q(s, a_m) = theta_m . [phi, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QModel {
    /// One bias-augmented weight vector per action.
    pub theta: Vec<Vec<f64>>,
    pub gamma: f64,
    pub ridge: f64,
}

impl QModel {
    /// All-zero model for a given action count and feature length.
    pub fn zeros(num_actions: usize, feature_dim: usize, gamma: f64, ridge: f64) -> Self {
        QModel {
            theta: vec![vec![0.0; feature_dim + 1]; num_actions],
            gamma,
            ridge,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.theta.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.theta.first().map_or(0, |t| t.len() - 1)
    }

    pub fn q_value(&self, phi: &StateActionFeature, action: ActionId) -> Result<f64> {
        let theta = self.theta.get(action).ok_or(Error::Dimension {
            context: "q-model action",
            expected: self.theta.len(),
            got: action,
        })?;
        if phi.len() + 1 != theta.len() {
            return Err(Error::Dimension {
                context: "q-model feature",
                expected: theta.len() - 1,
                got: phi.len(),
            });
        }
        Ok(dot(&theta[..phi.len()], phi.values()) + theta[phi.len()])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: QModel = read_json(path.as_ref())?;
        if model.theta.is_empty() || model.theta.iter().any(|t| t.len() < 2) {
            return Err(Error::parse(path.as_ref(), "malformed q-model"));
        }
        Ok(model)
    }
}

/// Epsilon-greedy action choice over candidate actions. `phis` is aligned
/// with `candidates`. With probability `1 - epsilon` the argmax of Q is
/// taken (ties to the lowest action index), otherwise a uniform candidate.
pub fn select_action(
    model: &QModel,
    phis: &[StateActionFeature],
    candidates: &[ActionId],
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ActionId> {
    if candidates.is_empty() {
        return Err(Error::Usage("empty candidate set".into()));
    }
    if phis.len() != candidates.len() {
        return Err(Error::Dimension {
            context: "select_action phi list",
            expected: candidates.len(),
            got: phis.len(),
        });
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(candidates[rng.random_range(0..candidates.len())]);
    }
    let mut best: Option<(ActionId, f64)> = None;
    for (phi, &a) in phis.iter().zip(candidates) {
        let q = model.q_value(phi, a)?;
        best = match best {
            Some((ba, bq)) if q > bq || (q == bq && a < ba) => Some((a, q)),
            None => Some((a, q)),
            keep => keep,
        };
    }
    Ok(best.expect("nonempty candidates").0)
}

/// Discounted returns `G_k = sum_{j>=k} gamma^{j-k} r_j`.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, &r) in returns.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    returns
}

/// One regression sample: the action taken, the state-action feature at
/// decision time, and the realized discounted return.
#[derive(Debug, Clone)]
pub struct QSample {
    pub action: ActionId,
    pub phi: StateActionFeature,
    pub ret: f64,
}

/// Fits one ridge regression per action over its samples. The bias
/// coordinate is left unregularized; actions with no samples keep zero
/// weights. For `lambda > 0` the normal-equation system is positive
/// definite and solved exactly.
pub fn fit_q(
    samples: &[QSample],
    num_actions: usize,
    feature_dim: usize,
    lambda: f64,
    gamma: f64,
) -> Result<QModel> {
    if lambda < 0.0 {
        return Err(Error::Training(format!("negative ridge strength {lambda}")));
    }
    let dim = feature_dim + 1;
    let mut model = QModel::zeros(num_actions, feature_dim, gamma, lambda);

    for action in 0..num_actions {
        let rows: Vec<&QSample> = samples.iter().filter(|s| s.action == action).collect();
        if rows.is_empty() {
            continue;
        }
        let mut ata = DMatrix::<f64>::zeros(dim, dim);
        let mut atb = DVector::<f64>::zeros(dim);
        for s in &rows {
            if s.phi.len() != feature_dim {
                return Err(Error::Dimension {
                    context: "fit_q sample feature",
                    expected: feature_dim,
                    got: s.phi.len(),
                });
            }
            let mut x = DVector::<f64>::zeros(dim);
            x.as_mut_slice()[..feature_dim].copy_from_slice(s.phi.values());
            x[feature_dim] = 1.0;
            ata += &x * x.transpose();
            atb += &x * s.ret;
        }
        for d in 0..feature_dim {
            ata[(d, d)] += lambda;
        }
        let theta = ata
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&atb))
            .or_else(|| ata.lu().solve(&atb))
            .ok_or_else(|| Error::Training("singular ridge system".into()))?;
        model.theta[action] = theta.as_slice().to_vec();
    }
    Ok(model)
}

/// One step of a recognition episode, kept for training and audit.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub action: ActionId,
    /// Issue time: the last buffered frame index (streaming) or 0 (batch).
    pub time: u64,
    pub phi: StateActionFeature,
    /// Scalar observation for detect actions, `None` for skip/extract.
    pub observation: Option<f64>,
    pub reward: f64,
    /// Discounted return; filled by [`EpisodeTrace::fill_returns`].
    pub ret: f64,
    /// `f(psi, y*)` after this step's update.
    pub posterior_true: f64,
    /// Invocation units charged for this step.
    pub cost: u64,
}

/// Ordered record of one recognition episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub video_id: String,
    pub label: usize,
    /// `f(psi, y*)` before any action.
    pub initial_posterior: f64,
    pub steps: Vec<StepRecord>,
    pub final_prediction: usize,
}

impl EpisodeTrace {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn final_posterior(&self) -> f64 {
        self.steps
            .last()
            .map_or(self.initial_posterior, |s| s.posterior_true)
    }

    /// Total invocation units spent by the episode.
    pub fn cost(&self) -> u64 {
        self.steps.iter().map(|s| s.cost).sum()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    /// Computes discounted returns in place and returns them.
    pub fn fill_returns(&mut self, gamma: f64) -> Vec<f64> {
        let returns = compute_returns(&self.rewards(), gamma);
        for (s, &g) in self.steps.iter_mut().zip(&returns) {
            s.ret = g;
        }
        returns
    }

    /// Converts the trace into regression samples for [`fit_q`].
    pub fn samples(&mut self, gamma: f64) -> Vec<QSample> {
        self.fill_returns(gamma);
        self.steps
            .iter()
            .map(|s| QSample {
                action: s.action,
                phi: s.phi.clone(),
                ret: s.ret,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub iterations: usize,
    pub gamma: f64,
    pub epsilon0: f64,
    pub epsilon_step: f64,
    pub epsilon_floor: f64,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            iterations: 8,
            gamma: 0.4,
            epsilon0: 0.5,
            epsilon_step: 0.1,
            epsilon_floor: 0.05,
            ridge: 1.0,
            seed: 1,
        }
    }
}

impl PolicyConfig {
    /// Exploration rate for a 1-based iteration index. The first iteration
    /// rolls a fully random policy; subsequent iterations start at
    /// `epsilon0` and decay by `epsilon_step` down to `epsilon_floor`.
    pub fn epsilon_for(&self, iteration: usize) -> f64 {
        if iteration <= 1 {
            1.0
        } else {
            (self.epsilon0 - self.epsilon_step * (iteration - 2) as f64).max(self.epsilon_floor)
        }
    }
}

/// Per-iteration diagnostics from [`policy_iteration`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub epsilon: f64,
    pub episodes: usize,
    pub new_samples: usize,
    pub total_samples: usize,
    pub mean_total_reward: f64,
    pub mean_final_posterior: f64,
}

/// Alternates between rolling episodes over all training videos under the
/// current policy and refitting the per-action ridge models on the union of
/// all samples collected so far. Iteration 1 uses the random policy.
pub fn policy_iteration(
    train: &Dataset,
    env: &Environment,
    cfg: &PolicyConfig,
) -> Result<(QModel, Vec<IterationStats>)> {
    if train.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if cfg.iterations == 0 {
        return Err(Error::Training(
            "policy iteration needs >= 1 iteration".into(),
        ));
    }
    let num_actions = env.num_actions();
    let feature_dim = env.feature_dim();

    let mut model = QModel::zeros(num_actions, feature_dim, cfg.gamma, cfg.ridge);
    let mut samples: Vec<QSample> = Vec::new();
    let mut stats = Vec::with_capacity(cfg.iterations);

    for iteration in 1..=cfg.iterations {
        let epsilon = cfg.epsilon_for(iteration);
        let selector = Selector::policy(model.clone(), epsilon);
        let mut new_samples = 0usize;
        let mut reward_sum = 0.0;
        let mut posterior_sum = 0.0;

        for (vi, video) in train.records.iter().enumerate() {
            let seed = derive_seed(cfg.seed, iteration as u64, vi as u64);
            let mut trace = env.run_episode(video, &selector, seed)?;
            reward_sum += trace.total_reward();
            posterior_sum += trace.final_posterior();
            let eps_samples = trace.samples(cfg.gamma);
            new_samples += eps_samples.len();
            samples.extend(eps_samples);
        }

        model = fit_q(&samples, num_actions, feature_dim, cfg.ridge, cfg.gamma)?;
        stats.push(IterationStats {
            iteration,
            epsilon,
            episodes: train.len(),
            new_samples,
            total_samples: samples.len(),
            mean_total_reward: reward_sum / train.len() as f64,
            mean_final_posterior: posterior_sum / train.len() as f64,
        });
    }

    Ok((model, stats))
}
