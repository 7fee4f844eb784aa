//! Batch and streaming episode mechanics: action spaces, observation
//! semantics, the streaming clock/cost model, rewards, and descriptor /
//! imputation plumbing.
//!
//! Cost model: one invocation unit is one detector applied to one frame.
//! The detector speed `f` is the number of units the extractor completes
//! per video second (the stream runs at 1 fps, so seconds equal frames).
//! A buffer-wide detection over `b` frames is charged `b` units and blocks
//! `b / f` seconds of processing time; several cheap actions can therefore
//! complete between two frame arrivals when the detector is fast. Skip
//! waits for the next arrival at zero cost. The episode ends when the
//! processing clock passes the end of the stream.

use serde::{Deserialize, Serialize};

use crate::classifier::LinearClassifier;
use crate::data::{Dataset, VideoRecord};
use crate::descriptor::{init_descriptor, DescriptorState, PoolMode};
use crate::error::{Error, Result};
use crate::gmm::DiagonalGmm;
use crate::qpolicy::{
    state_action_features, ActionHistory, ActionId, EpisodeTrace, HistoryMode, StepRecord,
};
use crate::selector::{SelectCtx, Selector};

/// Subvolume layout for batch action sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    /// Two non-overlapping temporal halves.
    TemporalHalves,
    /// Halves in time and a 2x2 spatial cell grid: eight volumes.
    Grid8,
}

/// A feature request the policy can issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActionSpec {
    /// Run object detector `object` over a space-time volume. The temporal
    /// extent `[t0, t1)` is relative to the clip length so the action set
    /// is constant across clip durations.
    DetectInVolume {
        object: usize,
        t0: f64,
        t1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cell: Option<u8>,
    },
    /// Run object detector `object` over the current stream buffer.
    DetectInBuffer { object: usize },
    /// Wait for the next frame without extracting anything.
    Skip,
    /// Extract the dense descriptor of the newest buffered frame.
    ExtractFrame,
}

impl ActionSpec {
    pub fn object(&self) -> Option<usize> {
        match self {
            ActionSpec::DetectInVolume { object, .. }
            | ActionSpec::DetectInBuffer { object } => Some(*object),
            _ => None,
        }
    }
}

/// The discrete action set of one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    pub specs: Vec<ActionSpec>,
    pub num_channels: usize,
}

impl ActionSet {
    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn skip_id(&self) -> Option<ActionId> {
        self.specs.iter().position(|s| matches!(s, ActionSpec::Skip))
    }

    /// Ids of actions that run a detector, ascending.
    pub fn detect_ids(&self) -> Vec<ActionId> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.object().is_some())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn requires_cells(&self) -> bool {
        self.specs.iter().any(|s| {
            matches!(
                s,
                ActionSpec::DetectInVolume { cell: Some(_), .. }
            )
        })
    }
}

/// Batch action set: every (object, volume) pair, object-major. Volumes are
/// pairwise disjoint and cover the clip.
pub fn make_batch_actions(num_channels: usize, grid: GridKind) -> ActionSet {
    let volumes: Vec<(f64, f64, Option<u8>)> = match grid {
        GridKind::TemporalHalves => vec![(0.0, 0.5, None), (0.5, 1.0, None)],
        GridKind::Grid8 => {
            let mut v = Vec::with_capacity(8);
            for &(t0, t1) in &[(0.0, 0.5), (0.5, 1.0)] {
                for cell in 0..4u8 {
                    v.push((t0, t1, Some(cell)));
                }
            }
            v
        }
    };
    let mut specs = Vec::with_capacity(num_channels * volumes.len());
    for object in 0..num_channels {
        for &(t0, t1, cell) in &volumes {
            specs.push(ActionSpec::DetectInVolume {
                object,
                t0,
                t1,
                cell,
            });
        }
    }
    ActionSet {
        specs,
        num_channels,
    }
}

/// Streaming action set for max-pool descriptors: skip (a_0) plus one
/// buffer-wide detector per object, `M = N + 1`.
pub fn make_streaming_actions(num_channels: usize) -> ActionSet {
    let mut specs = Vec::with_capacity(num_channels + 1);
    specs.push(ActionSpec::Skip);
    for object in 0..num_channels {
        specs.push(ActionSpec::DetectInBuffer { object });
    }
    ActionSet {
        specs,
        num_channels,
    }
}

/// Streaming action set for mean-pool (dense frame) descriptors: skip plus
/// a single extract action.
pub fn make_mean_streaming_actions(num_channels: usize) -> ActionSet {
    ActionSet {
        specs: vec![ActionSpec::Skip, ActionSpec::ExtractFrame],
        num_channels,
    }
}

/// Resolves a relative temporal extent to a frame range `[lo, hi)` such
/// that halves partition the clip exactly.
pub fn frame_range(t0: f64, t1: f64, frames: usize) -> (usize, usize) {
    let lo = (t0 * frames as f64).ceil() as usize;
    let hi = (t1 * frames as f64).ceil() as usize;
    (lo.min(frames), hi.min(frames))
}

/// The observation of one detect action: the maximum detection probability
/// of the object over the window's frames (restricted to the action's
/// spatial cell when one is declared). `window` overrides the action's own
/// temporal extent and is interpreted as `[lo, hi)`.
pub fn observe(
    video: &VideoRecord,
    action: &ActionSpec,
    window: Option<(usize, usize)>,
) -> Result<f64> {
    let frames = video.frames();
    let (object, lo, hi, cell) = match action {
        ActionSpec::DetectInVolume {
            object,
            t0,
            t1,
            cell,
        } => {
            let (lo, hi) = window.unwrap_or_else(|| frame_range(*t0, *t1, frames));
            (*object, lo, hi, *cell)
        }
        ActionSpec::DetectInBuffer { object } => {
            let (lo, hi) = window.ok_or_else(|| {
                Error::Usage("buffer detection needs an explicit window".into())
            })?;
            (*object, lo, hi, None)
        }
        _ => {
            return Err(Error::Usage(
                "skip/extract actions produce no detection observation".into(),
            ))
        }
    };
    if lo >= hi || hi > frames {
        return Err(Error::Usage(format!(
            "empty or out-of-bounds window [{lo}, {hi}) on {frames} frames"
        )));
    }
    if object >= video.channels() {
        return Err(Error::Dimension {
            context: "observe channel",
            expected: video.channels(),
            got: object,
        });
    }
    let boxes = match cell {
        Some(_) => Some(video.boxes.as_ref().ok_or_else(|| {
            Error::data(&video.id, "spatio-temporal action needs spatial cells")
        })?),
        None => None,
    };
    let mut best = 0.0f64;
    for t in lo..hi {
        if let (Some(c), Some(b)) = (cell, boxes) {
            if b.get(t, object) != c {
                continue;
            }
        }
        best = best.max(video.scores.get(t, object));
    }
    Ok(best)
}

/// `r = f(psi_after, y*) - f(psi_before, y*)`: a new action gets no credit
/// for confidence attributable to previous actions.
pub fn step_reward(
    classifier: &LinearClassifier,
    input_before: &[f64],
    input_after: &[f64],
    y_true: usize,
) -> Result<f64> {
    Ok(classifier.posterior(input_after, y_true)? - classifier.posterior(input_before, y_true)?)
}

/// Sum of per-action invocation costs of a trace.
pub fn episode_cost(trace: &EpisodeTrace) -> u64 {
    trace.cost()
}

/// Full-observation action values of one video: entry `m` is the detect
/// observation of action `m` over its full window (skip/extract entries
/// are zero).
pub fn full_action_observations(video: &VideoRecord, actions: &ActionSet) -> Result<Vec<f64>> {
    let frames = video.frames();
    actions
        .specs
        .iter()
        .map(|spec| match spec {
            ActionSpec::DetectInVolume { .. } => observe(video, spec, None),
            ActionSpec::DetectInBuffer { .. } => observe(video, spec, Some((0, frames))),
            _ => Ok(0.0),
        })
        .collect()
}

/// Full-observation action matrix of a dataset (rows = videos).
pub fn dataset_action_matrix(dataset: &Dataset, actions: &ActionSet) -> Result<Vec<Vec<f64>>> {
    dataset
        .records
        .iter()
        .map(|rec| full_action_observations(rec, actions))
        .collect()
}

/// Batch recognition environment: the whole clip is available, the budget
/// caps the number of actions, and unperformed observations are imputed
/// for the classifier.
pub struct BatchEnv<'a> {
    pub actions: &'a ActionSet,
    pub classifier: &'a LinearClassifier,
    pub gmm: Option<&'a DiagonalGmm>,
    /// Number of actions the episode may perform (`K`).
    pub budget: usize,
}

impl BatchEnv<'_> {
    /// The classifier input for the current descriptor: observed channels
    /// keep their pooled value, unobserved channels take the maximum of the
    /// mixture's conditional means over that object's (unperformed)
    /// actions. Without a mixture the raw descriptor is used.
    fn classifier_input(
        &self,
        psi: &DescriptorState,
        performed: &[bool],
        values: &[f64],
    ) -> Result<Vec<f64>> {
        let mut input = psi.psi().to_vec();
        let Some(gmm) = self.gmm else {
            return Ok(input);
        };
        let completed = gmm.complete(performed, values)?;
        for (channel, slot) in input.iter_mut().enumerate() {
            if psi.is_observed(channel) {
                continue;
            }
            let mut imputed = 0.0f64;
            for (m, spec) in self.actions.specs.iter().enumerate() {
                if spec.object() == Some(channel) {
                    imputed = imputed.max(completed[m]);
                }
            }
            *slot = imputed;
        }
        Ok(input)
    }

    pub fn episode(
        &self,
        video: &VideoRecord,
        selector: &Selector,
        seed: u64,
    ) -> Result<EpisodeTrace> {
        let m = self.actions.len();
        if self.budget > m {
            return Err(Error::Usage(format!(
                "budget {} exceeds action set size {m}",
                self.budget
            )));
        }
        if video.channels() != self.actions.num_channels {
            return Err(Error::Dimension {
                context: "batch episode channels",
                expected: self.actions.num_channels,
                got: video.channels(),
            });
        }
        if self.actions.requires_cells() && video.boxes.is_none() {
            return Err(Error::data(
                &video.id,
                "spatio-temporal action grid needs spatial cells",
            ));
        }
        if let Some(gmm) = self.gmm {
            if gmm.dim() != m {
                return Err(Error::Dimension {
                    context: "batch gmm dimensionality",
                    expected: m,
                    got: gmm.dim(),
                });
            }
        }

        let mut psi = init_descriptor(PoolMode::Max, video.channels(), None)?;
        let mut history = ActionHistory::new(m);
        let mut performed = vec![false; m];
        let mut values = vec![0.0; m];
        let mut cursor = selector.cursor(seed);

        let mut input = self.classifier_input(&psi, &performed, &values)?;
        let initial_posterior = self.classifier.posterior(&input, video.label)?;
        let mut f_prev = initial_posterior;
        let mut steps = Vec::with_capacity(self.budget);

        for k in 0..self.budget {
            let candidates: Vec<ActionId> = (0..m).filter(|&a| !performed[a]).collect();
            if candidates.is_empty() {
                break;
            }
            let phi = state_action_features(psi.psi(), &history, 0, HistoryMode::BinaryIndicator);
            let phis = vec![phi.clone(); candidates.len()];
            let action = cursor.select(&SelectCtx {
                candidates: &candidates,
                phis: &phis,
                skip_id: None,
            })?;
            if performed[action] {
                return Err(Error::Usage(format!(
                    "selector repeated batch action {action}"
                )));
            }
            let spec = &self.actions.specs[action];
            let x = observe(video, spec, None)?;
            psi.update_max(spec.object().expect("batch actions detect"), x)?;
            performed[action] = true;
            values[action] = x;
            history.record(action, 0);

            input = self.classifier_input(&psi, &performed, &values)?;
            let f_after = self.classifier.posterior(&input, video.label)?;
            steps.push(StepRecord {
                step: k,
                action,
                time: 0,
                phi,
                observation: Some(x),
                reward: f_after - f_prev,
                ret: 0.0,
                posterior_true: f_after,
                cost: 1,
            });
            f_prev = f_after;
        }

        Ok(EpisodeTrace {
            video_id: video.id.clone(),
            label: video.label,
            initial_posterior,
            steps,
            final_prediction: self.classifier.predict(&input)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Detector throughput in per-frame invocations per video second.
    pub detector_speed: u32,
    /// FIFO buffer capacity in frames.
    pub buffer: usize,
    pub pooling: PoolMode,
}

/// One logged frame read during a streaming episode, for causality audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessEvent {
    /// Frame index that was read.
    pub frame: usize,
    /// Clock (last arrived frame) when the read happened.
    pub clock: usize,
    /// Oldest frame still buffered when the read happened.
    pub buffer_lo: usize,
}

/// Streaming recognition environment: frames arrive at 1 fps, feature
/// requests see only the FIFO buffer, and the episode ends with the stream.
pub struct StreamEnv<'a> {
    pub actions: &'a ActionSet,
    pub classifier: &'a LinearClassifier,
    pub cfg: StreamConfig,
}

impl StreamEnv<'_> {
    pub fn episode(
        &self,
        video: &VideoRecord,
        selector: &Selector,
        seed: u64,
    ) -> Result<EpisodeTrace> {
        self.episode_logged(video, selector, seed, None)
    }

    /// As [`StreamEnv::episode`], optionally recording every frame read.
    pub fn episode_logged(
        &self,
        video: &VideoRecord,
        selector: &Selector,
        seed: u64,
        mut access_log: Option<&mut Vec<AccessEvent>>,
    ) -> Result<EpisodeTrace> {
        if self.cfg.detector_speed == 0 {
            return Err(Error::Config("detector speed must be positive".into()));
        }
        if self.cfg.buffer == 0 {
            return Err(Error::Config("stream buffer must hold >= 1 frame".into()));
        }
        let frames = video.frames();
        let speed = self.cfg.detector_speed as u64;
        let capacity = self.cfg.buffer;
        let m = self.actions.len();
        let label = video.label;

        let dense = match self.cfg.pooling {
            PoolMode::Mean => Some(video.dense.as_ref().ok_or_else(|| {
                Error::data(&video.id, "mean-pool streaming needs dense descriptors")
            })?),
            PoolMode::Max => None,
        };

        // The first frame's features initialize the representation.
        let mut psi = match self.cfg.pooling {
            PoolMode::Max => init_descriptor(PoolMode::Max, video.channels(), Some(video.scores.row(0)))?,
            PoolMode::Mean => {
                let d = dense.expect("checked above");
                init_descriptor(PoolMode::Mean, d.cols(), Some(d.row(0)))?
            }
        };
        if let Some(log) = access_log.as_deref_mut() {
            log.push(AccessEvent {
                frame: 0,
                clock: 0,
                buffer_lo: 0,
            });
        }
        if self.classifier.input_dim() != psi.dim() {
            return Err(Error::Dimension {
                context: "stream classifier input",
                expected: self.classifier.input_dim(),
                got: psi.dim(),
            });
        }

        let mut history = ActionHistory::new(m);
        let mut cursor = selector.cursor(seed);
        let initial_posterior = self.classifier.posterior(psi.psi(), label)?;
        let mut f_prev = initial_posterior;
        let mut steps = Vec::new();

        // Work ledger in invocation units; `speed` units elapse per frame
        // interval. The stream ends one interval after the last arrival.
        let mut work: u64 = 0;
        let end = frames as u64 * speed;

        while work < end {
            let clock = ((work / speed) as usize).min(frames - 1);
            // Re-running an extraction on an unchanged buffer yields nothing,
            // so actions already performed at this clock are not candidates
            // (skip always is; it advances the clock).
            let candidates: Vec<ActionId> = (0..m)
                .filter(|&a| {
                    matches!(self.actions.specs[a], ActionSpec::Skip)
                        || history.last_time_of(a) != Some(clock as u64)
                })
                .collect();
            let phi = state_action_features(psi.psi(), &history, clock as u64, HistoryMode::Recency);
            let phis = vec![phi.clone(); candidates.len()];
            let action = cursor.select(&SelectCtx {
                candidates: &candidates,
                phis: &phis,
                skip_id: self.actions.skip_id(),
            })?;

            let (observation, cost) = match &self.actions.specs[action] {
                ActionSpec::Skip => {
                    work = (work / speed + 1) * speed;
                    (None, 0)
                }
                ActionSpec::DetectInBuffer { object } => {
                    let width = capacity.min(clock + 1);
                    let lo = clock + 1 - width;
                    if let Some(log) = access_log.as_deref_mut() {
                        for t in lo..=clock {
                            log.push(AccessEvent {
                                frame: t,
                                clock,
                                buffer_lo: lo,
                            });
                        }
                    }
                    let x = observe(video, &self.actions.specs[action], Some((lo, clock + 1)))?;
                    psi.update_max(*object, x)?;
                    work += width as u64;
                    (Some(x), width as u64)
                }
                ActionSpec::ExtractFrame => {
                    let d = dense.ok_or_else(|| {
                        Error::Usage("extract action needs mean-pool streaming".into())
                    })?;
                    if let Some(log) = access_log.as_deref_mut() {
                        log.push(AccessEvent {
                            frame: clock,
                            clock,
                            buffer_lo: clock + 1 - capacity.min(clock + 1),
                        });
                    }
                    psi.update_mean(d.row(clock))?;
                    work += 1;
                    (None, 1)
                }
                ActionSpec::DetectInVolume { .. } => {
                    return Err(Error::Usage(
                        "volume actions are a batch-setting construct".into(),
                    ))
                }
            };

            let f_after = self.classifier.posterior(psi.psi(), label)?;
            steps.push(StepRecord {
                step: steps.len(),
                action,
                time: clock as u64,
                phi,
                observation,
                reward: f_after - f_prev,
                ret: 0.0,
                posterior_true: f_after,
                cost,
            });
            f_prev = f_after;
            history.record(action, clock as u64);
        }

        Ok(EpisodeTrace {
            video_id: video.id.clone(),
            label,
            initial_posterior,
            steps,
            final_prediction: self.classifier.predict(psi.psi())?,
        })
    }
}

/// Either episode machine behind one dispatching surface.
pub enum Environment<'a> {
    Batch(BatchEnv<'a>),
    Stream(StreamEnv<'a>),
}

impl Environment<'_> {
    pub fn run_episode(
        &self,
        video: &VideoRecord,
        selector: &Selector,
        seed: u64,
    ) -> Result<EpisodeTrace> {
        match self {
            Environment::Batch(env) => env.episode(video, selector, seed),
            Environment::Stream(env) => env.episode(video, selector, seed),
        }
    }

    pub fn action_set(&self) -> &ActionSet {
        match self {
            Environment::Batch(env) => env.actions,
            Environment::Stream(env) => env.actions,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.action_set().len()
    }

    /// Length of `phi`: descriptor dimensionality plus one recency slot per
    /// action.
    pub fn feature_dim(&self) -> usize {
        let psi_dim = match self {
            Environment::Batch(env) => env.classifier.input_dim(),
            Environment::Stream(env) => env.classifier.input_dim(),
        };
        psi_dim + self.num_actions()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierKind;
    use crate::data::{gen_synthetic, Matrix, SyntheticConfig};
    use crate::descriptor::full_max_descriptor;

    fn video(scores: Vec<Vec<f64>>) -> VideoRecord {
        VideoRecord {
            id: "v".into(),
            label: 0,
            fps: 1.0,
            scores: Matrix::from_rows(scores).unwrap(),
            boxes: None,
            dense: None,
        }
    }

    /// A fixed classifier over `n` channels: class 0 weighs channel 0, class
    /// 1 weighs channel 1.
    fn toy_classifier(n: usize) -> LinearClassifier {
        let mut w0 = vec![0.0; n + 1];
        let mut w1 = vec![0.0; n + 1];
        w0[0] = 3.0;
        w1[1.min(n - 1)] = 3.0;
        LinearClassifier {
            kind: ClassifierKind::Multiclass,
            weights: vec![w0, w1],
            l2: 1.0,
        }
    }

    #[test]
    fn batch_action_counts_match_grid_sizes() {
        assert_eq!(make_batch_actions(26, GridKind::Grid8).len(), 208);
        assert_eq!(make_batch_actions(75, GridKind::TemporalHalves).len(), 150);
    }

    #[test]
    fn temporal_halves_partition_each_clip_exactly() {
        for frames in 1..20 {
            let (lo0, hi0) = frame_range(0.0, 0.5, frames);
            let (lo1, hi1) = frame_range(0.5, 1.0, frames);
            assert_eq!(lo0, 0);
            assert_eq!(hi0, lo1, "{frames} frames");
            assert_eq!(hi1, frames);
        }
    }

    #[test]
    fn observe_takes_max_over_the_window() {
        let v = video(vec![vec![0.1], vec![0.9], vec![0.4]]);
        let whole = ActionSpec::DetectInVolume {
            object: 0,
            t0: 0.0,
            t1: 1.0,
            cell: None,
        };
        assert_eq!(observe(&v, &whole, None).unwrap(), 0.9);
        let first = ActionSpec::DetectInVolume {
            object: 0,
            t0: 0.0,
            t1: 0.5,
            cell: None,
        };
        assert_eq!(observe(&v, &first, None).unwrap(), 0.9);
        let second = ActionSpec::DetectInVolume {
            object: 0,
            t0: 0.5,
            t1: 1.0,
            cell: None,
        };
        assert_eq!(observe(&v, &second, None).unwrap(), 0.4);
    }

    #[test]
    fn observe_rejects_empty_window() {
        let v = video(vec![vec![0.5]]);
        let a = ActionSpec::DetectInBuffer { object: 0 };
        assert!(observe(&v, &a, Some((1, 1))).is_err());
    }

    #[test]
    fn observe_filters_by_spatial_cell() {
        let mut v = video(vec![vec![0.8], vec![0.6]]);
        let mut boxes = crate::data::Grid::<u8>::zeros(2, 1);
        boxes.set(0, 0, 1);
        boxes.set(1, 0, 2);
        v.boxes = Some(boxes);
        let cell1 = ActionSpec::DetectInVolume {
            object: 0,
            t0: 0.0,
            t1: 1.0,
            cell: Some(1),
        };
        assert_eq!(observe(&v, &cell1, None).unwrap(), 0.8);
        let cell3 = ActionSpec::DetectInVolume {
            object: 0,
            t0: 0.0,
            t1: 1.0,
            cell: Some(3),
        };
        // No detection lands in cell 3: zero probability, not an error.
        assert_eq!(observe(&v, &cell3, None).unwrap(), 0.0);
    }

    #[test]
    fn reward_is_posterior_difference() {
        let clf = toy_classifier(2);
        let before = [0.0, 0.0];
        let after = [1.0, 0.0];
        let r = step_reward(&clf, &before, &after, 0).unwrap();
        let expected =
            clf.posterior(&after, 0).unwrap() - clf.posterior(&before, 0).unwrap();
        assert_eq!(r, expected);
        assert!(r > 0.0);
        assert_eq!(step_reward(&clf, &before, &before, 0).unwrap(), 0.0);
        assert!(step_reward(&clf, &after, &before, 0).unwrap() < 0.0);
    }

    #[test]
    fn exhausting_the_batch_budget_reaches_the_full_descriptor() {
        let cfg = SyntheticConfig::planted(2, 4, 6, 3);
        let ds = gen_synthetic(&cfg).unwrap();
        let actions = make_batch_actions(4, GridKind::TemporalHalves);
        let clf = toy_classifier(4);
        let env = BatchEnv {
            actions: &actions,
            classifier: &clf,
            gmm: None,
            budget: actions.len(),
        };
        for rec in &ds.records {
            let trace = env.episode(rec, &Selector::Passive, 9).unwrap();
            assert_eq!(trace.steps.len(), actions.len());
            // Rebuild the final descriptor from the trace.
            let mut psi = vec![0.0f64; 4];
            for s in &trace.steps {
                let o = actions.specs[s.action].object().unwrap();
                psi[o] = psi[o].max(s.observation.unwrap());
            }
            assert_eq!(psi, full_max_descriptor(&rec.scores));
            assert_eq!(
                trace.final_prediction,
                clf.predict(&full_max_descriptor(&rec.scores)).unwrap()
            );
        }
    }

    #[test]
    fn zero_budget_predicts_from_marginal_imputation() {
        let actions = make_batch_actions(2, GridKind::TemporalHalves);
        let clf = toy_classifier(2);
        let gmm = DiagonalGmm {
            weights: vec![0.5, 0.5],
            means: vec![vec![0.9, 0.8, 0.1, 0.2], vec![0.7, 0.6, 0.3, 0.0]],
            variances: vec![vec![0.01; 4], vec![0.01; 4]],
        };
        let env = BatchEnv {
            actions: &actions,
            classifier: &clf,
            gmm: Some(&gmm),
            budget: 0,
        };
        let v = video(vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
        let trace = env.episode(&v, &Selector::Passive, 0).unwrap();
        assert!(trace.steps.is_empty());
        // Marginal action means -> channel maxima.
        let marginal: Vec<f64> = (0..4)
            .map(|m| 0.5 * gmm.means[0][m] + 0.5 * gmm.means[1][m])
            .collect();
        let expected = [
            marginal[0].max(marginal[1]),
            marginal[2].max(marginal[3]),
        ];
        assert_eq!(trace.final_prediction, clf.predict(&expected).unwrap());
        assert_eq!(
            trace.initial_posterior,
            clf.posterior(&expected, 0).unwrap()
        );
    }

    #[test]
    fn batch_budget_above_action_count_errors() {
        let actions = make_batch_actions(2, GridKind::TemporalHalves);
        let clf = toy_classifier(2);
        let env = BatchEnv {
            actions: &actions,
            classifier: &clf,
            gmm: None,
            budget: actions.len() + 1,
        };
        let v = video(vec![vec![0.0, 0.0]]);
        assert!(env.episode(&v, &Selector::Passive, 0).is_err());
    }

    #[test]
    fn batch_episodes_never_repeat_actions() {
        let cfg = SyntheticConfig::planted(2, 3, 4, 8);
        let ds = gen_synthetic(&cfg).unwrap();
        let actions = make_batch_actions(3, GridKind::TemporalHalves);
        let clf = toy_classifier(3);
        let env = BatchEnv {
            actions: &actions,
            classifier: &clf,
            gmm: None,
            budget: actions.len(),
        };
        for seed in 0..250u64 {
            let rec = &ds.records[(seed % 4) as usize];
            let trace = env.episode(rec, &Selector::Passive, seed).unwrap();
            let mut seen: Vec<ActionId> = trace.steps.iter().map(|s| s.action).collect();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), trace.steps.len());
        }
    }

    #[test]
    fn telescoping_rewards_in_batch() {
        let cfg = SyntheticConfig::planted(2, 4, 10, 77);
        let ds = gen_synthetic(&cfg).unwrap();
        let actions = make_batch_actions(4, GridKind::TemporalHalves);
        let clf = toy_classifier(4);
        let env = BatchEnv {
            actions: &actions,
            classifier: &clf,
            gmm: None,
            budget: 5,
        };
        for (i, rec) in ds.records.iter().enumerate() {
            let trace = env.episode(rec, &Selector::Passive, i as u64).unwrap();
            let total = trace.total_reward();
            let delta = trace.final_posterior() - trace.initial_posterior;
            assert!((total - delta).abs() < 1e-9);
        }
    }

    fn stream_cfg(speed: u32, buffer: usize) -> StreamConfig {
        StreamConfig {
            detector_speed: speed,
            buffer,
            pooling: PoolMode::Max,
        }
    }

    #[test]
    fn full_buffer_detect_costs_buffer_and_advances_by_its_blocking_time() {
        // 8 frames, buffer 4, speed 2: a detect issued with a full buffer
        // costs 4 units and blocks 2 seconds.
        let scores = vec![vec![0.2]; 8];
        let v = video(scores);
        let clf = toy_classifier(1);
        let actions = make_streaming_actions(1);
        let env = StreamEnv {
            actions: &actions,
            classifier: &clf,
            cfg: stream_cfg(2, 4),
        };
        let detect_only = Selector::StaticOrder {
            ranked: actions.detect_ids(),
        };
        let trace = env.episode(&v, &detect_only, 0).unwrap();
        // Clocks: 0 (b=1, +1s), 1 (b=2, +1s), 2 (b=3, blocks 1.5s -> clock 3)...
        let full_buffer_step = trace
            .steps
            .iter()
            .find(|s| s.cost == 4)
            .expect("a full-buffer detect");
        assert!(full_buffer_step.time >= 3);
        // A 4-unit detect at speed 2 blocks 2 seconds: the next step's issue
        // time is 2 frames later.
        let idx = trace
            .steps
            .iter()
            .position(|s| s.cost == 4)
            .unwrap();
        if let Some(next) = trace.steps.get(idx + 1) {
            assert_eq!(next.time - trace.steps[idx].time, 2);
        }
    }

    #[test]
    fn skip_advances_one_frame_at_zero_cost() {
        let v = video(vec![vec![0.3]; 5]);
        let clf = toy_classifier(1);
        let actions = make_streaming_actions(1);
        let env = StreamEnv {
            actions: &actions,
            classifier: &clf,
            cfg: stream_cfg(2, 3),
        };
        let skip_only = Selector::StaticOrder {
            ranked: vec![actions.skip_id().unwrap()],
        };
        let trace = env.episode(&v, &skip_only, 0).unwrap();
        assert_eq!(trace.steps.len(), 5);
        assert_eq!(trace.cost(), 0);
        for (k, s) in trace.steps.iter().enumerate() {
            assert_eq!(s.time, k as u64);
            assert_eq!(s.reward, 0.0);
            assert_eq!(s.cost, 0);
        }
        // psi never changes after initialization.
        assert_eq!(trace.final_posterior(), trace.initial_posterior);
    }

    #[test]
    fn fast_exhaustive_scanning_reaches_full_observation() {
        let cfg = SyntheticConfig::planted(2, 4, 6, 21);
        let mut cfg = cfg;
        cfg.len_range = (10, 14);
        let ds = gen_synthetic(&cfg).unwrap();
        let clf = toy_classifier(4);
        let actions = make_streaming_actions(4);
        let exhaustive = Selector::StaticOrder {
            ranked: actions.detect_ids(),
        };
        for rec in &ds.records {
            let speed = (4 * rec.frames()) as u32;
            let env = StreamEnv {
                actions: &actions,
                classifier: &clf,
                cfg: stream_cfg(speed, 3),
            };
            let trace = env.episode(rec, &exhaustive, 0).unwrap();
            // Rebuild psi: initialization reveals frame 0, detects reveal
            // buffer maxima.
            let mut psi = rec.scores.row(0).to_vec();
            for s in &trace.steps {
                if let Some(x) = s.observation {
                    let o = actions.specs[s.action].object().unwrap();
                    psi[o] = psi[o].max(x);
                }
            }
            assert_eq!(psi, full_max_descriptor(&rec.scores), "clip {}", rec.id);
        }
    }

    #[test]
    fn streaming_episodes_are_deterministic() {
        let cfg = SyntheticConfig::planted(2, 3, 2, 4);
        let ds = gen_synthetic(&cfg).unwrap();
        let clf = toy_classifier(3);
        let actions = make_streaming_actions(3);
        let env = StreamEnv {
            actions: &actions,
            classifier: &clf,
            cfg: stream_cfg(3, 4),
        };
        let sel = Selector::Passive;
        let a = env.episode(&ds.records[0], &sel, 42).unwrap();
        let b = env.episode(&ds.records[0], &sel, 42).unwrap();
        assert_eq!(a, b);
        let c = env.episode(&ds.records[0], &sel, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn streaming_reads_respect_buffer_and_clock() {
        let cfg = SyntheticConfig::planted(2, 3, 3, 14);
        let ds = gen_synthetic(&cfg).unwrap();
        let clf = toy_classifier(3);
        let actions = make_streaming_actions(3);
        let buffer = 4;
        let env = StreamEnv {
            actions: &actions,
            classifier: &clf,
            cfg: stream_cfg(2, buffer),
        };
        for (i, rec) in ds.records.iter().enumerate() {
            let mut log = Vec::new();
            env.episode_logged(rec, &Selector::Passive, i as u64, Some(&mut log))
                .unwrap();
            assert!(!log.is_empty());
            for ev in &log {
                assert!(ev.frame <= ev.clock, "future read: {ev:?}");
                assert!(ev.frame >= ev.buffer_lo, "evicted read: {ev:?}");
                assert!(ev.buffer_lo + buffer > ev.clock, "buffer too wide: {ev:?}");
            }
        }
    }

    #[test]
    fn all_skip_and_batch_costs_are_accounted() {
        let v = video(vec![vec![0.3, 0.1]; 6]);
        let clf = toy_classifier(2);
        let actions = make_streaming_actions(2);
        let env = StreamEnv {
            actions: &actions,
            classifier: &clf,
            cfg: stream_cfg(1, 4),
        };
        let skip_only = Selector::StaticOrder {
            ranked: vec![0],
        };
        let trace = env.episode(&v, &skip_only, 0).unwrap();
        assert_eq!(episode_cost(&trace), 0);

        // Batch trace of K actions costs K units.
        let bactions = make_batch_actions(2, GridKind::TemporalHalves);
        let benv = BatchEnv {
            actions: &bactions,
            classifier: &clf,
            gmm: None,
            budget: 3,
        };
        let btrace = benv.episode(&v, &Selector::Passive, 1).unwrap();
        assert_eq!(episode_cost(&btrace), 3);
    }
}
