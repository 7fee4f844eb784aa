//! Experiment orchestration: sweeps over budgets and detector speeds,
//! metric aggregation, and deterministic result emission. Every summary CSV
//! is reconstructible from the persisted trace dumps.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{dt_importance_order, dt_selectors, object_pref_order};
use crate::classifier::{ClassifierKind, LinearClassifier};
use crate::data::io::{read_json, write_json};
use crate::data::{concat_untrimmed, load_dataset, Dataset};
use crate::descriptor::PoolMode;
use crate::env::{
    dataset_action_matrix, make_batch_actions, make_mean_streaming_actions,
    make_streaming_actions, ActionSet, BatchEnv, GridKind, StreamConfig, StreamEnv,
};
use crate::error::{Error, Result};
use crate::gmm::DiagonalGmm;
use crate::qpolicy::{EpisodeTrace, QModel};
use crate::selector::Selector;
use crate::untrimmed::{amoc_curve, default_beta, f1_score, untrimmed_episode, DetectionTrace};
use crate::util::{derive_seed, mean_sd};

pub const WORKERS_ENV: &str = "FEATPRIO_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    Batch,
    Streaming,
    Untrimmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorSpec {
    /// The learned Q-policy, deployed greedily.
    Policy,
    Passive,
    ObjectPref,
    DtStatic,
    DtTop,
}

fn default_placements() -> usize {
    5
}

fn default_f1_threshold() -> f64 {
    0.5
}

fn default_thresholds() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

/// Full description of one experiment run. Serializable so runs can be
/// launched from a config file and are hashable for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub selector: SelectorSpec,
    /// Test manifest path.
    pub dataset: PathBuf,
    /// Training manifest; required by data-driven baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_dataset: Option<PathBuf>,
    pub classifier: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gmm: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PathBuf>,
    #[serde(default = "ExperimentConfig::default_grid")]
    pub grid: GridKind,
    /// Batch budget fractions.
    #[serde(default)]
    pub budgets: Vec<f64>,
    /// Streaming / untrimmed detector speeds (invocations per second).
    #[serde(default)]
    pub speeds: Vec<u32>,
    /// Stream buffer in frames; `None` = half the median clip length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer: Option<usize>,
    /// Window bound in frames; `None` = one third of the channel count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<usize>,
    #[serde(default = "ExperimentConfig::default_pooling")]
    pub pooling: PoolMode,
    /// Target activity for untrimmed detection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[serde(default = "default_placements")]
    pub placements: usize,
    /// DT-Top subset size; `None` = the detector speed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<usize>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_f1_threshold")]
    pub f1_threshold: f64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    fn default_grid() -> GridKind {
        GridKind::TemporalHalves
    }

    fn default_pooling() -> PoolMode {
        PoolMode::Max
    }

    /// Stable content hash of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must be nonempty".into()));
        }
        match self.setting {
            Setting::Batch => {
                if self.budgets.is_empty() {
                    return Err(Error::Config("batch sweep needs budget fractions".into()));
                }
                if self.budgets.iter().any(|b| !(0.0..=1.0).contains(b)) {
                    return Err(Error::Config("budget fractions must lie in [0, 1]".into()));
                }
            }
            Setting::Streaming | Setting::Untrimmed => {
                if self.speeds.is_empty() {
                    return Err(Error::Config("streaming sweep needs detector speeds".into()));
                }
                if self.speeds.iter().any(|&s| s == 0) {
                    return Err(Error::Config("detector speeds must be positive".into()));
                }
            }
        }
        if self.setting == Setting::Untrimmed && self.target.is_none() {
            return Err(Error::Config("untrimmed runs need a target activity".into()));
        }
        if self.selector == SelectorSpec::Policy && self.policy.is_none() {
            return Err(Error::Config("policy selector needs a model path".into()));
        }
        Ok(())
    }
}

/// One persisted episode, sufficient to rebuild every summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceDump {
    Recognition {
        /// Budget fraction (batch) or detector speed (streaming).
        sweep: f64,
        seed: u64,
        video_id: String,
        label: usize,
        prediction: usize,
        initial_posterior: f64,
        /// True-class posterior after each step.
        posteriors: Vec<f64>,
        rewards: Vec<f64>,
        cost: u64,
    },
    Detection {
        sweep: f64,
        seed: u64,
        video_id: String,
        target: usize,
        span: (usize, usize),
        confidences: Vec<f64>,
        cost: u64,
    },
}

impl TraceDump {
    fn recognition(sweep: f64, seed: u64, trace: &EpisodeTrace) -> Self {
        TraceDump::Recognition {
            sweep,
            seed,
            video_id: trace.video_id.clone(),
            label: trace.label,
            prediction: trace.final_prediction,
            initial_posterior: trace.initial_posterior,
            posteriors: trace.steps.iter().map(|s| s.posterior_true).collect(),
            rewards: trace.rewards(),
            cost: trace.cost(),
        }
    }

    fn detection(sweep: f64, seed: u64, trace: &DetectionTrace) -> Self {
        TraceDump::Detection {
            sweep,
            seed,
            video_id: trace.video_id.clone(),
            target: 0,
            span: trace.span,
            confidences: trace.confidences.clone(),
            cost: trace.cost,
        }
    }
}

/// Fraction of correct predictions.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::Usage(format!(
            "accuracy needs matching nonempty inputs, got {} vs {}",
            predictions.len(),
            labels.len()
        )));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// 0 is the initial state, k >= 1 follows the k-th action.
    pub step: usize,
    pub mean: f64,
    pub sd: f64,
    /// Episodes long enough to contribute to this step.
    pub episodes: usize,
}

fn curve_from_sequences(seqs: &[Vec<f64>]) -> Vec<CurvePoint> {
    let longest = seqs.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|step| {
            let values: Vec<f64> = seqs
                .iter()
                .filter_map(|s| s.get(step))
                .copied()
                .collect();
            let (mean, sd) = mean_sd(&values);
            CurvePoint {
                step,
                mean,
                sd,
                episodes: values.len(),
            }
        })
        .collect()
}

/// Mean true-class confidence per step index over a set of episodes.
pub fn confidence_curve(traces: &[EpisodeTrace]) -> Vec<CurvePoint> {
    let seqs: Vec<Vec<f64>> = traces
        .iter()
        .map(|t| {
            let mut seq = Vec::with_capacity(t.steps.len() + 1);
            seq.push(t.initial_posterior);
            seq.extend(t.steps.iter().map(|s| s.posterior_true));
            seq
        })
        .collect();
    curve_from_sequences(&seqs)
}

fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Runs `n` independent jobs on a bounded worker pool, preserving job
/// order in the results.
fn run_jobs<T, F>(n: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let workers = worker_count().min(n.max(1));
    if workers <= 1 {
        return (0..n).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = job(i);
                *slots[i].lock().expect("job slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("job slot").expect("job ran"))
        .collect()
}

fn require_file(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "missing file"),
        ));
    }
    Ok(())
}

/// Everything loaded once per run.
struct RunInputs {
    test: Dataset,
    train: Option<Dataset>,
    classifier: LinearClassifier,
    gmm: Option<DiagonalGmm>,
    policy: Option<QModel>,
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<RunInputs> {
    require_file(&cfg.dataset)?;
    require_file(&cfg.classifier)?;
    let test = load_dataset(&cfg.dataset)?;
    let train = cfg
        .train_dataset
        .as_ref()
        .map(|p| {
            require_file(p)?;
            load_dataset(p)
        })
        .transpose()?;
    let classifier = LinearClassifier::load(&cfg.classifier)?;
    let gmm = cfg
        .gmm
        .as_ref()
        .map(|p| {
            require_file(p)?;
            DiagonalGmm::load(p)
        })
        .transpose()?;
    let policy = cfg
        .policy
        .as_ref()
        .map(|p| {
            require_file(p)?;
            QModel::load(p)
        })
        .transpose()?;
    Ok(RunInputs {
        test,
        train,
        classifier,
        gmm,
        policy,
    })
}

/// Binarizes labels against a target activity.
fn binarize(dataset: &Dataset, target: usize) -> Dataset {
    let mut out = dataset.clone();
    out.num_activities = 2;
    for rec in &mut out.records {
        rec.label = usize::from(rec.label == target);
    }
    out
}

/// Builds the configured selector for one action set. `speed` feeds the
/// DT-Top default subset size; `dt_labels` picks the label space for tree
/// orderings.
fn build_selector(
    cfg: &ExperimentConfig,
    inputs: &RunInputs,
    actions: &ActionSet,
    speed: Option<u32>,
) -> Result<Selector> {
    let train_needed = matches!(
        cfg.selector,
        SelectorSpec::ObjectPref | SelectorSpec::DtStatic | SelectorSpec::DtTop
    );
    let train = if train_needed {
        Some(inputs.train.as_ref().ok_or_else(|| {
            Error::Config("this selector needs --train-manifest".into())
        })?)
    } else {
        None
    };
    match cfg.selector {
        SelectorSpec::Policy => {
            let model = inputs
                .policy
                .clone()
                .ok_or_else(|| Error::Config("policy selector needs a model".into()))?;
            Ok(Selector::greedy(model))
        }
        SelectorSpec::Passive => Ok(Selector::Passive),
        SelectorSpec::ObjectPref => {
            let train = train.expect("checked");
            let observations = dataset_action_matrix(train, actions)?;
            let labels = selector_labels(cfg, train);
            Ok(object_pref_order(&observations, &labels, actions).into_selector())
        }
        SelectorSpec::DtStatic | SelectorSpec::DtTop => {
            let train = train.expect("checked");
            let observations = dataset_action_matrix(train, actions)?;
            let labels = selector_labels(cfg, train);
            let (order, _) = dt_importance_order(&observations, &labels, actions)?;
            if cfg.selector == SelectorSpec::DtStatic {
                return Ok(order.into_selector());
            }
            let p = cfg
                .top_p
                .or(speed.map(|s| s as usize))
                .unwrap_or(order.ranked.len());
            let (_, dt_top) = dt_selectors(&order, p);
            Ok(dt_top.into_selector())
        }
    }
}

/// For untrimmed runs tree/preference orderings rank actions against the
/// binary target; recognition runs use the activity labels.
fn selector_labels(cfg: &ExperimentConfig, train: &Dataset) -> Vec<usize> {
    match (cfg.setting, cfg.target) {
        (Setting::Untrimmed, Some(target)) => train
            .labels()
            .iter()
            .map(|&l| usize::from(l == target))
            .collect(),
        _ => train.labels(),
    }
}

/// Summary written next to the emitted CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub config: ExperimentConfig,
}

/// Executes the configured sweep, writes `traces.jsonl`, `summary.json`,
/// and the per-setting CSVs into the output directory, and returns the
/// summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    let dumps = match cfg.setting {
        Setting::Batch => run_batch_sweep(cfg, &inputs)?,
        Setting::Streaming => run_streaming_sweep(cfg, &inputs)?,
        Setting::Untrimmed => run_untrimmed_sweep(cfg, &inputs)?,
    };

    write_traces(&cfg.out_dir.join("traces.jsonl"), &dumps)?;
    let summary = RunSummary {
        config_hash: cfg.hash(),
        config: cfg.clone(),
    };
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    aggregate_and_write(cfg, &dumps)?;
    Ok(summary)
}

/// Rebuilds the summary CSVs of a finished run from its persisted traces.
pub fn report(dir: &Path) -> Result<RunSummary> {
    let summary: RunSummary = read_json(&dir.join("summary.json"))?;
    let dumps = read_traces(&dir.join("traces.jsonl"))?;
    let mut cfg = summary.config.clone();
    cfg.out_dir = dir.to_path_buf();
    aggregate_and_write(&cfg, &dumps)?;
    Ok(summary)
}

fn write_traces(path: &Path, dumps: &[TraceDump]) -> Result<()> {
    let mut text = String::new();
    for dump in dumps {
        text.push_str(
            &serde_json::to_string(dump).map_err(|e| Error::parse(path, e.to_string()))?,
        );
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_traces(path: &Path) -> Result<Vec<TraceDump>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(|line| serde_json::from_str(line).map_err(|e| Error::parse(path, e.to_string())))
        .collect()
}

fn batch_budget(frac: f64, actions: usize) -> usize {
    ((frac * actions as f64).round() as usize).min(actions)
}

fn run_batch_sweep(cfg: &ExperimentConfig, inputs: &RunInputs) -> Result<Vec<TraceDump>> {
    let actions = make_batch_actions(inputs.test.num_channels, cfg.grid);
    let selector = build_selector(cfg, inputs, &actions, None)?;
    let jobs: Vec<(f64, u64)> = cfg
        .budgets
        .iter()
        .flat_map(|&b| cfg.seeds.iter().map(move |&s| (b, s)))
        .collect();
    let results = run_jobs(jobs.len(), |j| {
        let (budget_frac, seed) = jobs[j];
        let env = BatchEnv {
            actions: &actions,
            classifier: &inputs.classifier,
            gmm: inputs.gmm.as_ref(),
            budget: batch_budget(budget_frac, actions.len()),
        };
        let mut dumps = Vec::with_capacity(inputs.test.len());
        for (vi, video) in inputs.test.records.iter().enumerate() {
            let ep_seed = derive_seed(seed, j as u64, vi as u64);
            let trace = env.episode(video, &selector, ep_seed)?;
            dumps.push(TraceDump::recognition(budget_frac, seed, &trace));
        }
        Ok(dumps)
    })?;
    Ok(results.into_iter().flatten().collect())
}

fn stream_buffer(cfg: &ExperimentConfig, dataset: &Dataset) -> usize {
    cfg.buffer
        .unwrap_or_else(|| (dataset.median_frames() / 2).max(1))
}

fn run_streaming_sweep(cfg: &ExperimentConfig, inputs: &RunInputs) -> Result<Vec<TraceDump>> {
    let actions = match cfg.pooling {
        PoolMode::Max => make_streaming_actions(inputs.test.num_channels),
        PoolMode::Mean => make_mean_streaming_actions(inputs.test.num_channels),
    };
    let buffer = stream_buffer(cfg, &inputs.test);
    let jobs: Vec<(u32, u64)> = cfg
        .speeds
        .iter()
        .flat_map(|&f| cfg.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let results = run_jobs(jobs.len(), |j| {
        let (speed, seed) = jobs[j];
        let selector = build_selector(cfg, inputs, &actions, Some(speed))?;
        let env = StreamEnv {
            actions: &actions,
            classifier: &inputs.classifier,
            cfg: StreamConfig {
                detector_speed: speed,
                buffer,
                pooling: cfg.pooling,
            },
        };
        let mut dumps = Vec::with_capacity(inputs.test.len());
        for (vi, video) in inputs.test.records.iter().enumerate() {
            let ep_seed = derive_seed(seed, j as u64, vi as u64);
            let trace = env.episode(video, &selector, ep_seed)?;
            dumps.push(TraceDump::recognition(speed as f64, seed, &trace));
        }
        Ok(dumps)
    })?;
    Ok(results.into_iter().flatten().collect())
}

fn run_untrimmed_sweep(cfg: &ExperimentConfig, inputs: &RunInputs) -> Result<Vec<TraceDump>> {
    let target = cfg.target.expect("validated");
    if target >= inputs.test.num_activities {
        return Err(Error::Config(format!(
            "target activity {target} out of range for {} activities",
            inputs.test.num_activities
        )));
    }
    let actions = make_streaming_actions(inputs.test.num_channels);
    let beta = cfg
        .beta
        .unwrap_or_else(|| default_beta(inputs.test.num_channels));
    let buffer = stream_buffer(cfg, &inputs.test);
    if inputs.classifier.kind != ClassifierKind::Binary {
        return Err(Error::Config(
            "untrimmed detection needs a binary classifier".into(),
        ));
    }

    let positives: Vec<_> = inputs
        .test
        .records
        .iter()
        .filter(|r| r.label == target)
        .cloned()
        .collect();
    let negatives: Vec<_> = inputs
        .test
        .records
        .iter()
        .filter(|r| r.label != target)
        .cloned()
        .collect();
    if positives.is_empty() {
        return Err(Error::Config(format!(
            "no clips of target activity {target} in the test set"
        )));
    }

    let jobs: Vec<(u32, u64)> = cfg
        .speeds
        .iter()
        .flat_map(|&f| cfg.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let results = run_jobs(jobs.len(), |j| {
        let (speed, seed) = jobs[j];
        let selector = build_selector(cfg, inputs, &actions, Some(speed))?;
        let records = concat_untrimmed(
            &positives,
            &negatives,
            cfg.placements,
            derive_seed(seed, 0x75, 0),
        )?;
        let stream_cfg = StreamConfig {
            detector_speed: speed,
            buffer,
            pooling: PoolMode::Max,
        };
        let mut dumps = Vec::with_capacity(records.len());
        for (vi, record) in records.iter().enumerate() {
            let ep_seed = derive_seed(seed, j as u64, vi as u64);
            let trace = untrimmed_episode(
                record,
                &selector,
                &actions,
                &stream_cfg,
                beta,
                &inputs.classifier,
                ep_seed,
                None,
            )?;
            let mut dump = TraceDump::detection(speed as f64, seed, &trace);
            if let TraceDump::Detection { target: t, .. } = &mut dump {
                *t = target;
            }
            dumps.push(dump);
        }
        Ok(dumps)
    })?;
    Ok(results.into_iter().flatten().collect())
}

// ---- aggregation ----------------------------------------------------------

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))
}

fn sweep_values(dumps: &[TraceDump]) -> Vec<f64> {
    let mut values: Vec<f64> = dumps
        .iter()
        .map(|d| match d {
            TraceDump::Recognition { sweep, .. } | TraceDump::Detection { sweep, .. } => *sweep,
        })
        .collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

fn seeds_of(dumps: &[TraceDump]) -> Vec<u64> {
    let mut seeds: Vec<u64> = dumps
        .iter()
        .map(|d| match d {
            TraceDump::Recognition { seed, .. } | TraceDump::Detection { seed, .. } => *seed,
        })
        .collect();
    seeds.sort_unstable();
    seeds.dedup();
    seeds
}

fn aggregate_and_write(cfg: &ExperimentConfig, dumps: &[TraceDump]) -> Result<()> {
    match cfg.setting {
        Setting::Batch => {
            write_accuracy_csv(&cfg.out_dir.join("accuracy_vs_budget.csv"), "budget_frac", dumps)
        }
        Setting::Streaming => {
            write_accuracy_csv(
                &cfg.out_dir.join("accuracy_vs_speed.csv"),
                "detector_fps",
                dumps,
            )?;
            write_confidence_csv(&cfg.out_dir.join("confidence_vs_step.csv"), dumps)
        }
        Setting::Untrimmed => {
            write_f1_csv(&cfg.out_dir.join("f1_vs_speed.csv"), cfg.f1_threshold, dumps)?;
            write_amoc_csv(&cfg.out_dir.join("amoc.csv"), &cfg.thresholds, dumps)
        }
    }
}

fn recognition_rows(
    dumps: &[TraceDump],
    sweep: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<f64>, Vec<Vec<f64>>) {
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    let mut costs = Vec::new();
    let mut seqs = Vec::new();
    for dump in dumps {
        if let TraceDump::Recognition {
            sweep: s,
            seed: sd,
            label,
            prediction,
            initial_posterior,
            posteriors,
            cost,
            ..
        } = dump
        {
            if *s == sweep && *sd == seed {
                predictions.push(*prediction);
                labels.push(*label);
                costs.push(*cost as f64);
                let mut seq = Vec::with_capacity(posteriors.len() + 1);
                seq.push(*initial_posterior);
                seq.extend_from_slice(posteriors);
                seqs.push(seq);
            }
        }
    }
    (predictions, labels, costs, seqs)
}

fn write_accuracy_csv(path: &Path, sweep_name: &str, dumps: &[TraceDump]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        sweep_name,
        "accuracy_mean",
        "accuracy_sd",
        "cost_mean",
        "cost_sd",
        "seeds",
    ])
    .map_err(|e| Error::parse(path, e.to_string()))?;
    for sweep in sweep_values(dumps) {
        let mut accuracies = Vec::new();
        let mut costs = Vec::new();
        for seed in seeds_of(dumps) {
            let (predictions, labels, job_costs, _) = recognition_rows(dumps, sweep, seed);
            if predictions.is_empty() {
                continue;
            }
            accuracies.push(accuracy(&predictions, &labels)?);
            costs.push(job_costs.iter().sum::<f64>() / job_costs.len() as f64);
        }
        let (acc_mean, acc_sd) = mean_sd(&accuracies);
        let (cost_mean, cost_sd) = mean_sd(&costs);
        w.write_record([
            format!("{sweep}"),
            format!("{acc_mean}"),
            format!("{acc_sd}"),
            format!("{cost_mean}"),
            format!("{cost_sd}"),
            format!("{}", accuracies.len()),
        ])
        .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_confidence_csv(path: &Path, dumps: &[TraceDump]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "detector_fps",
        "step",
        "confidence_mean",
        "confidence_sd",
        "episodes",
    ])
    .map_err(|e| Error::parse(path, e.to_string()))?;
    for sweep in sweep_values(dumps) {
        let mut seqs = Vec::new();
        for seed in seeds_of(dumps) {
            let (_, _, _, mut job_seqs) = recognition_rows(dumps, sweep, seed);
            seqs.append(&mut job_seqs);
        }
        for point in curve_from_sequences(&seqs) {
            w.write_record([
                format!("{sweep}"),
                format!("{}", point.step),
                format!("{}", point.mean),
                format!("{}", point.sd),
                format!("{}", point.episodes),
            ])
            .map_err(|e| Error::parse(path, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn detection_traces(dumps: &[TraceDump], sweep: f64, seed: u64) -> Vec<DetectionTrace> {
    dumps
        .iter()
        .filter_map(|d| match d {
            TraceDump::Detection {
                sweep: s,
                seed: sd,
                video_id,
                span,
                confidences,
                cost,
                ..
            } if *s == sweep && *sd == seed => Some(DetectionTrace {
                video_id: video_id.clone(),
                confidences: confidences.clone(),
                span: *span,
                cost: *cost,
            }),
            _ => None,
        })
        .collect()
}

fn write_f1_csv(path: &Path, threshold: f64, dumps: &[TraceDump]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "detector_fps",
        "f1_mean",
        "f1_sd",
        "cost_mean",
        "cost_sd",
        "seeds",
    ])
    .map_err(|e| Error::parse(path, e.to_string()))?;
    for sweep in sweep_values(dumps) {
        let mut f1s = Vec::new();
        let mut costs = Vec::new();
        for seed in seeds_of(dumps) {
            let traces = detection_traces(dumps, sweep, seed);
            if traces.is_empty() {
                continue;
            }
            f1s.push(f1_score(&traces, threshold)?);
            costs.push(
                traces.iter().map(|t| t.cost as f64).sum::<f64>() / traces.len() as f64,
            );
        }
        let (f1_mean, f1_sd) = mean_sd(&f1s);
        let (cost_mean, cost_sd) = mean_sd(&costs);
        w.write_record([
            format!("{sweep}"),
            format!("{f1_mean}"),
            format!("{f1_sd}"),
            format!("{cost_mean}"),
            format!("{cost_sd}"),
            format!("{}", f1s.len()),
        ])
        .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_amoc_csv(path: &Path, thresholds: &[f64], dumps: &[TraceDump]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "detector_fps",
        "threshold",
        "fpr_mean",
        "fpr_sd",
        "nt2d_mean",
        "nt2d_sd",
    ])
    .map_err(|e| Error::parse(path, e.to_string()))?;
    let mut sorted_thresholds = thresholds.to_vec();
    sorted_thresholds.sort_by(f64::total_cmp);
    for sweep in sweep_values(dumps) {
        for &threshold in &sorted_thresholds {
            let mut fprs = Vec::new();
            let mut nt2ds = Vec::new();
            for seed in seeds_of(dumps) {
                let traces = detection_traces(dumps, sweep, seed);
                if traces.is_empty() {
                    continue;
                }
                let points = amoc_curve(&traces, &[threshold])?;
                fprs.push(points[0].false_positive_rate);
                nt2ds.push(points[0].mean_nt2d);
            }
            let (fpr_mean, fpr_sd) = mean_sd(&fprs);
            let (nt2d_mean, nt2d_sd) = mean_sd(&nt2ds);
            w.write_record([
                format!("{sweep}"),
                format!("{threshold}"),
                format!("{fpr_mean}"),
                format!("{fpr_sd}"),
                format!("{nt2d_mean}"),
                format!("{nt2d_sd}"),
            ])
            .map_err(|e| Error::parse(path, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Binarized view of a dataset for target-vs-rest policy training.
pub fn binarize_dataset(dataset: &Dataset, target: usize) -> Result<Dataset> {
    if target >= dataset.num_activities {
        return Err(Error::Config(format!(
            "target activity {target} out of range"
        )));
    }
    Ok(binarize(dataset, target))
}
