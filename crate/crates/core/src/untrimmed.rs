//! Frame-level activity detection on untrimmed streams: bounded window
//! search over a binary recognizer, plus the F1 and AMOC metrics.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::LinearClassifier;
use crate::data::{Dataset, UntrimmedRecord};
use crate::descriptor::full_max_descriptor;
use crate::env::{AccessEvent, ActionSet, ActionSpec, StreamConfig};
use crate::error::{Error, Result};
use crate::qpolicy::{state_action_features, ActionHistory, ActionId, HistoryMode};
use crate::selector::{SelectCtx, Selector};

/// Default window bound: one third of the number of object categories, so
/// a single window cannot observe every object.
pub fn default_beta(num_channels: usize) -> usize {
    num_channels.div_ceil(3).max(1)
}

/// Ring of the most recent `beta` frames' revealed per-channel scores.
/// Un-revealed entries read as zero (no detection evidence). Window
/// descriptors are recomputed from the ring on demand, so memory stays
/// `O(beta * N)` regardless of stream length.
#[derive(Debug, Clone)]
pub struct WindowBank {
    beta: usize,
    num_channels: usize,
    rows: VecDeque<Vec<f64>>,
    /// Frame index of `rows[0]`.
    base: usize,
}

impl WindowBank {
    pub fn new(beta: usize, num_channels: usize) -> Self {
        WindowBank {
            beta,
            num_channels,
            rows: VecDeque::with_capacity(beta),
            base: 0,
        }
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    /// Number of frames currently held (<= beta).
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of the newest banked frame.
    pub fn newest(&self) -> Option<usize> {
        (!self.rows.is_empty()).then(|| self.base + self.rows.len() - 1)
    }

    /// Registers the arrival of the next frame, evicting beyond `beta`.
    pub fn push_frame(&mut self) {
        if self.rows.len() == self.beta {
            self.rows.pop_front();
            self.base += 1;
        }
        self.rows.push_back(vec![0.0; self.num_channels]);
    }

    /// Records a revealed detection score; frames older than the ring are
    /// ignored.
    pub fn reveal(&mut self, frame: usize, channel: usize, score: f64) {
        if frame < self.base || frame >= self.base + self.rows.len() {
            return;
        }
        let row = &mut self.rows[frame - self.base];
        row[channel] = row[channel].max(score);
    }

    /// Max-pool descriptor of the window of `len` frames ending at the
    /// newest banked frame.
    pub fn window_descriptor(&self, len: usize) -> Vec<f64> {
        let mut psi = vec![0.0f64; self.num_channels];
        let have = self.rows.len();
        for row in self.rows.iter().skip(have.saturating_sub(len)) {
            for (p, &v) in psi.iter_mut().zip(row) {
                *p = (*p).max(v);
            }
        }
        psi
    }
}

/// Evaluates every window of length `1..=min(beta, frames so far)` ending
/// at the newest frame and returns the highest positive-class confidence
/// with its window length (ties to the shortest window).
pub fn window_predict(
    binary_clf: &LinearClassifier,
    bank: &WindowBank,
) -> Result<(f64, usize)> {
    if bank.is_empty() {
        return Err(Error::Usage("window prediction needs >= 1 frame".into()));
    }
    let longest = bank.len().min(bank.beta());
    let mut best = (f64::NEG_INFINITY, 0usize);
    for len in 1..=longest {
        let psi = bank.window_descriptor(len);
        let conf = binary_clf.posterior(&psi, 1)?;
        if conf > best.0 {
            best = (conf, len);
        }
    }
    Ok(best)
}

/// Per-frame detection outcome of one untrimmed episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTrace {
    pub video_id: String,
    /// One confidence per frame, in arrival order.
    pub confidences: Vec<f64>,
    /// Ground-truth `[start, end)` span of the positive activity.
    pub span: (usize, usize),
    /// Total invocation units spent.
    pub cost: u64,
}

impl DetectionTrace {
    /// Frame-level binary labels at a confidence threshold.
    pub fn labels_at(&self, threshold: f64) -> Vec<bool> {
        self.confidences.iter().map(|&c| c >= threshold).collect()
    }
}

/// Frame-level F1 over all frames of all traces at one threshold.
pub fn f1_score(traces: &[DetectionTrace], threshold: f64) -> Result<f64> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut positives = 0usize;
    for trace in traces {
        for (t, &c) in trace.confidences.iter().enumerate() {
            let truth = t >= trace.span.0 && t < trace.span.1;
            let pred = c >= threshold;
            positives += usize::from(truth);
            match (truth, pred) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    if positives == 0 {
        return Err(Error::Usage(
            "f1 needs at least one positive ground-truth frame".into(),
        ));
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// One point of the timeliness curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmocPoint {
    pub threshold: f64,
    /// Fraction of videos with any firing outside the true span.
    pub false_positive_rate: f64,
    /// Mean normalized time to detection, misses scored as 1.
    pub mean_nt2d: f64,
}

/// Activity monitoring operating curve over the given thresholds. A video
/// "fires" at its first frame with confidence >= threshold; NT2D is the
/// normalized offset of that frame into the true span, clamped to [0, 1],
/// with undetected positives scored 1. Any firing outside the span marks
/// the video as a false positive. Points are sorted by false positive rate.
pub fn amoc_curve(traces: &[DetectionTrace], thresholds: &[f64]) -> Result<Vec<AmocPoint>> {
    if thresholds.is_empty() {
        return Err(Error::Usage("amoc needs at least one threshold".into()));
    }
    if traces.is_empty() {
        return Err(Error::Usage("amoc needs at least one trace".into()));
    }
    let mut points: Vec<AmocPoint> = thresholds
        .iter()
        .map(|&threshold| {
            let mut nt2d_sum = 0.0;
            let mut fp = 0usize;
            for trace in traces {
                let (start, end) = trace.span;
                let span_len = (end - start).max(1) as f64;
                let firings: Vec<usize> = trace
                    .confidences
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c >= threshold)
                    .map(|(t, _)| t)
                    .collect();
                match firings.first() {
                    None => nt2d_sum += 1.0,
                    Some(&first) => {
                        let nt2d = (first as f64 - start as f64) / span_len;
                        nt2d_sum += nt2d.clamp(0.0, 1.0);
                        if firings.iter().any(|&t| t < start || t >= end) {
                            fp += 1;
                        }
                    }
                }
            }
            AmocPoint {
                threshold,
                false_positive_rate: fp as f64 / traces.len() as f64,
                mean_nt2d: nt2d_sum / traces.len() as f64,
            }
        })
        .collect();
    points.sort_by(|a, b| {
        a.false_positive_rate
            .total_cmp(&b.false_positive_rate)
            .then(a.threshold.total_cmp(&b.threshold))
    });
    Ok(points)
}

/// Runs the streaming cost model over an untrimmed record. Detect actions
/// reveal the scanned channel's per-frame scores into the window bank. A
/// frame's label is finalized by bounded window search when the next frame
/// arrives (or the stream ends), so it reflects every extraction performed
/// while the frame was newest. The selector sees the bank's longest-window
/// descriptor as its state.
pub fn untrimmed_episode(
    record: &UntrimmedRecord,
    selector: &Selector,
    actions: &ActionSet,
    cfg: &StreamConfig,
    beta: usize,
    binary_clf: &LinearClassifier,
    seed: u64,
    mut access_log: Option<&mut Vec<AccessEvent>>,
) -> Result<DetectionTrace> {
    if cfg.detector_speed == 0 {
        return Err(Error::Config("detector speed must be positive".into()));
    }
    if cfg.buffer == 0 || beta == 0 {
        return Err(Error::Config("buffer and beta must hold >= 1 frame".into()));
    }
    let frames = record.len();
    let channels = record.frames.cols();
    if binary_clf.input_dim() != channels {
        return Err(Error::Dimension {
            context: "untrimmed classifier input",
            expected: channels,
            got: binary_clf.input_dim(),
        });
    }
    let m = actions.len();
    let speed = cfg.detector_speed as u64;
    let capacity = cfg.buffer;

    let mut bank = WindowBank::new(beta, channels);
    let mut confidences = Vec::with_capacity(frames);
    let mut cost = 0u64;

    // Frame 0 arrives with its features revealed (first-frame init).
    bank.push_frame();
    for channel in 0..channels {
        bank.reveal(0, channel, record.frames.get(0, channel));
    }
    if let Some(log) = access_log.as_deref_mut() {
        log.push(AccessEvent {
            frame: 0,
            clock: 0,
            buffer_lo: 0,
        });
    }

    let mut history = ActionHistory::new(m);
    let mut cursor = selector.cursor(seed);
    let mut work: u64 = 0;
    let end = frames as u64 * speed;

    while work < end {
        let clock = ((work / speed) as usize).min(frames - 1);
        // Same-buffer re-runs extract nothing; only skip may repeat within
        // one clock.
        let candidates: Vec<ActionId> = (0..m)
            .filter(|&a| {
                matches!(actions.specs[a], ActionSpec::Skip)
                    || history.last_time_of(a) != Some(clock as u64)
            })
            .collect();
        let psi = bank.window_descriptor(bank.len());
        let phi = state_action_features(&psi, &history, clock as u64, HistoryMode::Recency);
        let phis = vec![phi; candidates.len()];
        let action = cursor.select(&SelectCtx {
            candidates: &candidates,
            phis: &phis,
            skip_id: actions.skip_id(),
        })?;

        match &actions.specs[action] {
            ActionSpec::Skip => {
                work = (work / speed + 1) * speed;
            }
            ActionSpec::DetectInBuffer { object } => {
                let width = capacity.min(clock + 1);
                let lo = clock + 1 - width;
                for t in lo..=clock {
                    if let Some(log) = access_log.as_deref_mut() {
                        log.push(AccessEvent {
                            frame: t,
                            clock,
                            buffer_lo: lo,
                        });
                    }
                    bank.reveal(t, *object, record.frames.get(t, *object));
                }
                cost += width as u64;
                work += width as u64;
            }
            _ => {
                return Err(Error::Usage(
                    "untrimmed episodes use buffer detections and skip only".into(),
                ))
            }
        }
        history.record(action, clock as u64);

        // Each arrival finalizes the previous newest frame's label with
        // everything revealed while it was newest.
        let new_clock = ((work / speed) as usize).min(frames - 1);
        for _frame in clock + 1..=new_clock {
            confidences.push(window_predict(binary_clf, &bank)?.0);
            bank.push_frame();
        }
    }
    // Stream end finalizes the last frame.
    confidences.push(window_predict(binary_clf, &bank)?.0);

    debug_assert_eq!(confidences.len(), frames);
    Ok(DetectionTrace {
        video_id: record.id.clone(),
        confidences,
        span: record.span,
        cost,
    })
}

/// How many windows each clip contributes to binary recognizer training.
const WINDOWS_PER_CLIP: usize = 4;

/// Training set for the binary untrimmed recognizer. The recognizer decides
/// whether the target activity occurs in a window, so both sides are
/// beta-bounded windows: positives are drawn from target-class clips (every
/// window of a trimmed positive lies inside the activity), negatives are
/// drawn uniformly from other activities' clips, count-matched to the
/// positives.
pub fn build_binary_training_set(
    dataset: &Dataset,
    target: usize,
    beta: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if target >= dataset.num_activities {
        return Err(Error::Config(format!(
            "target activity {target} out of range"
        )));
    }
    let positives: Vec<&crate::data::VideoRecord> = dataset
        .records
        .iter()
        .filter(|r| r.label == target)
        .collect();
    let negatives: Vec<&crate::data::VideoRecord> = dataset
        .records
        .iter()
        .filter(|r| r.label != target)
        .collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Training(
            "binary training needs both positive and negative clips".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample_window = |rec: &crate::data::VideoRecord, rng: &mut ChaCha8Rng| {
        let frames = rec.frames();
        let len = rng.random_range(1..=beta.min(frames));
        let start = rng.random_range(0..=frames - len);
        full_max_descriptor(&rec.scores.slice_rows(start, start + len))
    };

    let count = positives.len() * WINDOWS_PER_CLIP;
    let mut xs = Vec::with_capacity(2 * count);
    let mut ys = Vec::with_capacity(2 * count);
    for rec in &positives {
        for _ in 0..WINDOWS_PER_CLIP {
            xs.push(sample_window(rec, &mut rng));
            ys.push(1usize);
        }
    }
    for _ in 0..count {
        let rec = negatives[rng.random_range(0..negatives.len())];
        xs.push(sample_window(rec, &mut rng));
        ys.push(0usize);
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierKind;
    use crate::data::Matrix;

    fn binary_clf(weights: Vec<f64>) -> LinearClassifier {
        LinearClassifier {
            kind: ClassifierKind::Binary,
            weights: vec![weights],
            l2: 1.0,
        }
    }

    fn trace(confidences: Vec<f64>, span: (usize, usize)) -> DetectionTrace {
        DetectionTrace {
            video_id: "t".into(),
            confidences,
            span,
            cost: 0,
        }
    }

    #[test]
    fn first_frame_evaluates_only_the_unit_window() {
        let mut bank = WindowBank::new(3, 2);
        bank.push_frame();
        bank.reveal(0, 0, 0.7);
        let clf = binary_clf(vec![4.0, 0.0, 0.0]);
        let (conf, len) = window_predict(&clf, &bank).unwrap();
        assert_eq!(len, 1);
        assert!((conf - clf.posterior(&[0.7, 0.0], 1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn planted_two_frame_positive_selects_window_length_two() {
        // Channel 0 active on the last two frames only; an earlier frame is
        // noise on channel 1 that hurts longer windows.
        let clf = binary_clf(vec![4.0, -4.0, 0.0]);
        let mut bank = WindowBank::new(3, 2);
        bank.push_frame(); // frame 0
        bank.reveal(0, 1, 1.0);
        bank.push_frame(); // frame 1
        bank.reveal(1, 0, 1.0);
        bank.push_frame(); // frame 2
        bank.reveal(2, 0, 1.0);
        // Hand enumeration: len 1 -> psi [1,0]; len 2 -> [1,0]; len 3 -> [1,1].
        // Lengths 1 and 2 tie at the max; the shortest wins.
        let (conf, len) = window_predict(&clf, &bank).unwrap();
        assert_eq!(len, 1);
        assert!((conf - clf.posterior(&[1.0, 0.0], 1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn zero_scores_and_weights_return_half_confidence_unit_window() {
        let clf = binary_clf(vec![0.0, 0.0, 0.0]);
        let mut bank = WindowBank::new(3, 2);
        for _ in 0..3 {
            bank.push_frame();
        }
        let (conf, len) = window_predict(&clf, &bank).unwrap();
        assert_eq!(conf, 0.5);
        assert_eq!(len, 1);
    }

    #[test]
    fn bank_never_holds_more_than_beta_frames() {
        let mut bank = WindowBank::new(4, 1);
        for t in 0..20 {
            bank.push_frame();
            bank.reveal(t, 0, 0.5);
            assert!(bank.len() <= 4);
            assert_eq!(bank.newest(), Some(t));
        }
        // Reveals to evicted frames are dropped.
        bank.reveal(0, 0, 1.0);
        assert_eq!(bank.window_descriptor(4), vec![0.5]);
    }

    #[test]
    fn f1_trivial_values() {
        let perfect = vec![trace(vec![0.0, 1.0, 1.0, 0.0], (1, 3))];
        assert_eq!(f1_score(&perfect, 0.5).unwrap(), 1.0);
        let silent = vec![trace(vec![0.0, 0.0, 0.0, 0.0], (1, 3))];
        assert_eq!(f1_score(&silent, 0.5).unwrap(), 0.0);
        // Precision 1, recall 0.5 -> F1 = 2/3.
        let half = vec![trace(vec![0.0, 1.0, 0.0, 0.0], (1, 3))];
        let f1 = f1_score(&half, 0.5).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_is_invariant_to_trace_order() {
        let a = trace(vec![0.9, 0.0, 0.8], (0, 1));
        let b = trace(vec![0.0, 0.7, 0.7, 0.0], (1, 3));
        let fwd = f1_score(&[a.clone(), b.clone()], 0.5).unwrap();
        let rev = f1_score(&[b, a], 0.5).unwrap();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn amoc_immediate_perfect_detection() {
        let t = trace(vec![0.0, 1.0, 0.0, 0.0], (1, 3));
        let points = amoc_curve(&[t], &[0.5]).unwrap();
        assert_eq!(points[0].false_positive_rate, 0.0);
        assert_eq!(points[0].mean_nt2d, 0.0);
    }

    #[test]
    fn amoc_miss_scores_one() {
        let t = trace(vec![0.1, 0.2, 0.1], (0, 2));
        let points = amoc_curve(&[t], &[0.9]).unwrap();
        assert_eq!(points[0].mean_nt2d, 1.0);
        assert_eq!(points[0].false_positive_rate, 0.0);
    }

    #[test]
    fn amoc_matches_hand_computed_curve() {
        // Three traces, two thresholds, worked by hand.
        let t1 = trace(vec![0.2, 0.8, 0.9, 0.1], (1, 3)); // fires inside
        let t2 = trace(vec![0.7, 0.1, 0.6, 0.1], (2, 4)); // fires before span
        let t3 = trace(vec![0.1, 0.1, 0.1, 0.3], (0, 2)); // weak tail firing
        let traces = [t1, t2, t3];
        let points = amoc_curve(&traces, &[0.5, 0.25]).unwrap();

        // threshold 0.5: t1 fires at 1 -> nt2d 0, no outside firing.
        //   t2 fires at 0 (before span) -> nt2d clamp((0-2)/2)=0, fp.
        //   t3 never fires -> nt2d 1.
        //   fpr = 1/3, mean nt2d = 1/3.
        // threshold 0.25: t1 same; t2 same ->
        //   t3 fires at 3 (outside, after span) -> nt2d clamp(3/2)=1, fp.
        //   fpr = 2/3, mean nt2d = 1/3.
        let p_05 = points
            .iter()
            .find(|p| p.threshold == 0.5)
            .unwrap();
        assert!((p_05.false_positive_rate - 1.0 / 3.0).abs() < 1e-12);
        assert!((p_05.mean_nt2d - 1.0 / 3.0).abs() < 1e-12);
        let p_025 = points.iter().find(|p| p.threshold == 0.25).unwrap();
        assert!((p_025.false_positive_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((p_025.mean_nt2d - 1.0 / 3.0).abs() < 1e-12);
        // Sorted by FPR.
        assert!(points[0].false_positive_rate <= points[1].false_positive_rate);
    }

    #[test]
    fn amoc_fpr_is_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let traces: Vec<DetectionTrace> = (0..100)
            .map(|i| {
                let frames = rng.random_range(6..20);
                let start = rng.random_range(0..frames - 2);
                let end = rng.random_range(start + 1..frames);
                DetectionTrace {
                    video_id: format!("r{i}"),
                    confidences: (0..frames).map(|_| rng.random::<f64>()).collect(),
                    span: (start, end),
                    cost: 0,
                }
            })
            .collect();
        let thresholds: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        for pair in thresholds.windows(2) {
            let lo = amoc_curve(&traces, &[pair[0]]).unwrap()[0].false_positive_rate;
            let hi = amoc_curve(&traces, &[pair[1]]).unwrap()[0].false_positive_rate;
            assert!(hi <= lo, "fpr increased from {lo} to {hi}");
        }
    }

    #[test]
    fn default_beta_is_a_third_of_the_channels() {
        assert_eq!(default_beta(26), 9);
        assert_eq!(default_beta(75), 25);
        assert_eq!(default_beta(1), 1);
    }

    fn untrimmed(frames: Vec<Vec<f64>>, span: (usize, usize)) -> UntrimmedRecord {
        UntrimmedRecord {
            id: "u".into(),
            frames: Matrix::from_rows(frames).unwrap(),
            span,
            target: 0,
            fps: 1.0,
        }
    }

    #[test]
    fn all_skip_labels_every_frame_at_zero_cost() {
        let record = untrimmed(vec![vec![0.2, 0.1]; 7], (2, 4));
        let clf = binary_clf(vec![2.0, -1.0, 0.0]);
        let actions = crate::env::make_streaming_actions(2);
        let skip_only = Selector::StaticOrder { ranked: vec![0] };
        let cfg = StreamConfig {
            detector_speed: 2,
            buffer: 3,
            pooling: crate::descriptor::PoolMode::Max,
        };
        let trace =
            untrimmed_episode(&record, &skip_only, &actions, &cfg, 2, &clf, 0, None).unwrap();
        assert_eq!(trace.confidences.len(), 7);
        assert_eq!(trace.cost, 0);
    }

    #[test]
    fn exhaustive_fast_scan_matches_offline_window_search() {
        // Construct a stream where channel 0 spikes inside the span.
        let mut frames = vec![vec![0.05, 0.4]; 10];
        for row in frames.iter_mut().take(7).skip(4) {
            row[0] = 0.95;
        }
        let record = untrimmed(frames, (4, 7));
        let clf = binary_clf(vec![3.0, -1.0, -0.5]);
        let actions = crate::env::make_streaming_actions(2);
        let exhaustive = Selector::StaticOrder {
            ranked: actions.detect_ids(),
        };
        let beta = 3;
        let cfg = StreamConfig {
            detector_speed: (2 * record.len() * 2) as u32,
            buffer: record.len(),
            pooling: crate::descriptor::PoolMode::Max,
        };
        let trace =
            untrimmed_episode(&record, &exhaustive, &actions, &cfg, beta, &clf, 0, None).unwrap();

        // Offline oracle: full observation, brute-force windows <= beta.
        for t in 0..record.len() {
            let mut best = f64::NEG_INFINITY;
            for len in 1..=beta.min(t + 1) {
                let window = record.frames.slice_rows(t + 1 - len, t + 1);
                let psi = full_max_descriptor(&window);
                best = best.max(clf.posterior(&psi, 1).unwrap());
            }
            assert!(
                (trace.confidences[t] - best).abs() < 1e-12,
                "frame {t}: {} vs {best}",
                trace.confidences[t]
            );
        }
    }

    #[test]
    fn cost_ledger_sums_buffer_widths() {
        let record = untrimmed(vec![vec![0.5]; 6], (1, 3));
        let clf = binary_clf(vec![1.0, 0.0]);
        let actions = crate::env::make_streaming_actions(1);
        let detect_only = Selector::StaticOrder {
            ranked: actions.detect_ids(),
        };
        let cfg = StreamConfig {
            detector_speed: 1,
            buffer: 4,
            pooling: crate::descriptor::PoolMode::Max,
        };
        let mut log = Vec::new();
        let trace = untrimmed_episode(
            &record,
            &detect_only,
            &actions,
            &cfg,
            2,
            &clf,
            0,
            Some(&mut log),
        )
        .unwrap();
        // Every detect is logged once per scanned frame; init adds one.
        assert_eq!(trace.cost as usize, log.len() - 1);
    }
}
