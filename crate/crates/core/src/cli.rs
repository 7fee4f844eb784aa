//! The `featprio` command line: dataset generation, model training, episode
//! runners, baselines, and report regeneration.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classifier::{train_classifier, ClassifierKind, LinearClassifier};
use crate::data::io::read_json;
use crate::data::{gen_synthetic, load_dataset, save_dataset, SyntheticConfig};
use crate::descriptor::{full_descriptors, PoolMode};
use crate::env::{
    dataset_action_matrix, make_batch_actions, make_mean_streaming_actions,
    make_streaming_actions, BatchEnv, Environment, GridKind, StreamConfig, StreamEnv,
};
use crate::error::{Error, Result};
use crate::experiment::{
    binarize_dataset, report, run_experiment, ExperimentConfig, SelectorSpec, Setting,
};
use crate::gmm::{fit_gmm, DiagonalGmm, DEFAULT_COMPONENTS};
use crate::qpolicy::{policy_iteration, PolicyConfig};
use crate::untrimmed::{build_binary_training_set, default_beta};

#[derive(Debug, Parser)]
#[command(
    name = "featprio",
    about = "Dynamic feature prioritization for activity recognition on video feature streams",
    version
)]
struct Cli {
    /// Master seed (overrides config seeds where applicable).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Configuration file (synthetic config or experiment config).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Multiclass,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PoolArg {
    Max,
    Mean,
}

impl From<PoolArg> for PoolMode {
    fn from(p: PoolArg) -> Self {
        match p {
            PoolArg::Max => PoolMode::Max,
            PoolArg::Mean => PoolMode::Mean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GridArg {
    Halves,
    Grid8,
}

impl From<GridArg> for GridKind {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Halves => GridKind::TemporalHalves,
            GridArg::Grid8 => GridKind::Grid8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SettingArg {
    Batch,
    Streaming,
    Untrimmed,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a config file.
    GenSynthetic,
    /// Train the activity recognizer on fully observed descriptors.
    TrainClassifier(TrainClassifierArgs),
    /// Fit the observation mixture used for batch imputation.
    TrainGmm(TrainGmmArgs),
    /// Learn a feature-prioritization policy by policy iteration.
    TrainPolicy(TrainPolicyArgs),
    /// Sweep batch episodes over budget fractions.
    RunBatch(RunArgs),
    /// Sweep streaming episodes over detector speeds.
    RunStreaming(RunArgs),
    /// Sweep untrimmed detection episodes over detector speeds.
    RunUntrimmed(RunArgs),
    /// Run a comparison selector through the episode runners.
    Baseline(BaselineArgs),
    /// Rebuild the summary CSVs of a finished run from its trace dumps.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct TrainClassifierArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "multiclass")]
    kind: KindArg,
    #[arg(long, value_enum, default_value = "max")]
    pooling: PoolArg,
    #[arg(long, default_value_t = 1.0)]
    l2: f64,
    /// Target activity (binary kind).
    #[arg(long)]
    target: Option<usize>,
    /// Window bound for negative sampling (binary kind).
    #[arg(long)]
    beta: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainGmmArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "halves")]
    grid: GridArg,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    components: usize,
}

#[derive(Debug, Args)]
struct TrainPolicyArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    gmm: Option<PathBuf>,
    #[arg(long, value_enum)]
    setting: SettingArg,
    #[arg(long, value_enum, default_value = "halves")]
    grid: GridArg,
    #[arg(long, default_value_t = 4)]
    detector_fps: u32,
    /// Buffer in frames; defaults to half the median clip length.
    #[arg(long)]
    buffer: Option<usize>,
    #[arg(long, value_enum, default_value = "max")]
    pooling: PoolArg,
    /// Target activity (when training against a binary classifier).
    #[arg(long)]
    target: Option<usize>,
    #[arg(long, default_value_t = 8)]
    iterations: usize,
    #[arg(long, default_value_t = 0.4)]
    gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    epsilon0: f64,
    #[arg(long, default_value_t = 0.1)]
    epsilon_step: f64,
    #[arg(long, default_value_t = 0.05)]
    epsilon_floor: f64,
    #[arg(long, default_value_t = 1.0)]
    ridge: f64,
}

#[derive(Debug, Args, Clone)]
struct RunArgs {
    /// Test manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Training manifest (data-driven baselines).
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    classifier: Option<PathBuf>,
    #[arg(long)]
    gmm: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "policy")]
    selector: SelectorSpec,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "halves")]
    grid: GridArg,
    /// Batch budget fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    budget_frac: Vec<f64>,
    /// Detector speeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    detector_fps: Vec<u32>,
    #[arg(long)]
    buffer: Option<usize>,
    #[arg(long)]
    beta: Option<usize>,
    #[arg(long, value_enum, default_value = "max")]
    pooling: PoolArg,
    #[arg(long)]
    target_activity: Option<usize>,
    #[arg(long, default_value_t = 5)]
    placements: usize,
    /// DT-Top subset size; defaults to the detector speed.
    #[arg(long)]
    top_p: Option<usize>,
    /// AMOC thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    f1_threshold: f64,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    method: SelectorSpec,
    #[arg(long, value_enum)]
    setting: SettingArg,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory of a finished run.
    #[arg(long)]
    dir: PathBuf,
}

/// Entry point shared by the binary and in-process tests.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    dispatch(cli)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic => gen_synthetic_cmd(&cli),
        Command::TrainClassifier(ref args) => train_classifier_cmd(&cli, args),
        Command::TrainGmm(ref args) => train_gmm_cmd(&cli, args),
        Command::TrainPolicy(ref args) => train_policy_cmd(&cli, args),
        Command::RunBatch(ref args) => {
            let cfg = experiment_config(&cli, args, Setting::Batch, args.selector)?;
            run_experiment(&cfg).map(|s| println!("run complete: {}", s.config_hash))
        }
        Command::RunStreaming(ref args) => {
            let cfg = experiment_config(&cli, args, Setting::Streaming, args.selector)?;
            run_experiment(&cfg).map(|s| println!("run complete: {}", s.config_hash))
        }
        Command::RunUntrimmed(ref args) => {
            let cfg = experiment_config(&cli, args, Setting::Untrimmed, args.selector)?;
            run_experiment(&cfg).map(|s| println!("run complete: {}", s.config_hash))
        }
        Command::Baseline(ref args) => {
            let setting = match args.setting {
                SettingArg::Batch => Setting::Batch,
                SettingArg::Streaming => Setting::Streaming,
                SettingArg::Untrimmed => Setting::Untrimmed,
            };
            let cfg = experiment_config(&cli, &args.run, setting, args.method)?;
            run_experiment(&cfg).map(|s| println!("run complete: {}", s.config_hash))
        }
        Command::Report(ref args) => {
            report(&args.dir).map(|s| println!("report rebuilt: {}", s.config_hash))
        }
    }
}

fn required_out(cli: &Cli) -> Result<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| Error::Usage("--out is required".into()))
}

fn gen_synthetic_cmd(cli: &Cli) -> Result<()> {
    let config_path = cli
        .config
        .clone()
        .ok_or_else(|| Error::Usage("gen-synthetic needs --config".into()))?;
    let mut cfg: SyntheticConfig = read_json(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = required_out(cli)?;
    let dataset = gen_synthetic(&cfg)?;
    let manifest = save_dataset(&dataset, &out)?;
    println!(
        "wrote {} clips ({} activities, {} channels) to {}",
        dataset.len(),
        dataset.num_activities,
        dataset.num_channels,
        manifest.display()
    );
    Ok(())
}

fn train_classifier_cmd(cli: &Cli, args: &TrainClassifierArgs) -> Result<()> {
    let out = required_out(cli)?;
    let dataset = load_dataset(&args.manifest)?;
    let clf = match args.kind {
        KindArg::Multiclass => {
            let (xs, ys) = full_descriptors(&dataset, args.pooling.into())?;
            train_classifier(&xs, &ys, args.l2, ClassifierKind::Multiclass)?
        }
        KindArg::Binary => {
            let target = args
                .target
                .ok_or_else(|| Error::Usage("binary training needs --target".into()))?;
            let beta = args.beta.unwrap_or_else(|| default_beta(dataset.num_channels));
            let seed = cli.seed.unwrap_or(1);
            let (xs, ys) = build_binary_training_set(&dataset, target, beta, seed)?;
            train_classifier(&xs, &ys, args.l2, ClassifierKind::Binary)?
        }
    };
    clf.save(&out)?;
    println!(
        "trained {:?} classifier on {} clips -> {}",
        clf.kind,
        dataset.len(),
        out.display()
    );
    Ok(())
}

fn train_gmm_cmd(cli: &Cli, args: &TrainGmmArgs) -> Result<()> {
    let out = required_out(cli)?;
    let dataset = load_dataset(&args.manifest)?;
    let actions = make_batch_actions(dataset.num_channels, args.grid.into());
    let observations = dataset_action_matrix(&dataset, &actions)?;
    let fit = fit_gmm(&observations, args.components, cli.seed.unwrap_or(1))?;
    fit.model.save(&out)?;
    println!(
        "fit {}-component mixture over {} actions in {} iterations (final ll {:.3}) -> {}",
        fit.model.num_components(),
        actions.len(),
        fit.log_likelihoods.len(),
        fit.log_likelihoods.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn train_policy_cmd(cli: &Cli, args: &TrainPolicyArgs) -> Result<()> {
    let out = required_out(cli)?;
    let mut dataset = load_dataset(&args.manifest)?;
    let classifier = LinearClassifier::load(&args.classifier)?;
    if classifier.kind == ClassifierKind::Binary {
        let target = args.target.ok_or_else(|| {
            Error::Usage("training against a binary classifier needs --target".into())
        })?;
        dataset = binarize_dataset(&dataset, target)?;
    }

    let pcfg = PolicyConfig {
        iterations: args.iterations,
        gamma: args.gamma,
        epsilon0: args.epsilon0,
        epsilon_step: args.epsilon_step,
        epsilon_floor: args.epsilon_floor,
        ridge: args.ridge,
        seed: cli.seed.unwrap_or(1),
    };

    let gmm = args.gmm.as_ref().map(DiagonalGmm::load).transpose()?;
    let (model, stats) = match args.setting {
        SettingArg::Batch => {
            let actions = make_batch_actions(dataset.num_channels, args.grid.into());
            let env = Environment::Batch(BatchEnv {
                actions: &actions,
                classifier: &classifier,
                gmm: gmm.as_ref(),
                budget: actions.len(),
            });
            policy_iteration(&dataset, &env, &pcfg)?
        }
        SettingArg::Streaming => {
            let pooling: PoolMode = args.pooling.into();
            let actions = match pooling {
                PoolMode::Max => make_streaming_actions(dataset.num_channels),
                PoolMode::Mean => make_mean_streaming_actions(dataset.num_channels),
            };
            let buffer = args
                .buffer
                .unwrap_or_else(|| (dataset.median_frames() / 2).max(1));
            let env = Environment::Stream(StreamEnv {
                actions: &actions,
                classifier: &classifier,
                cfg: StreamConfig {
                    detector_speed: args.detector_fps,
                    buffer,
                    pooling,
                },
            });
            policy_iteration(&dataset, &env, &pcfg)?
        }
        SettingArg::Untrimmed => {
            return Err(Error::Usage(
                "policies are trained in the batch or streaming setting".into(),
            ))
        }
    };

    model.save(&out)?;
    println!("iter  epsilon  samples  mean_reward  mean_posterior");
    for s in &stats {
        println!(
            "{:>4}  {:>7.2}  {:>7}  {:>11.4}  {:>14.4}",
            s.iteration, s.epsilon, s.total_samples, s.mean_total_reward, s.mean_final_posterior
        );
    }
    println!("saved policy -> {}", out.display());
    Ok(())
}

fn experiment_config(
    cli: &Cli,
    args: &RunArgs,
    setting: Setting,
    selector: SelectorSpec,
) -> Result<ExperimentConfig> {
    // A config file replaces flag-built configs wholesale.
    if let Some(path) = &cli.config {
        let mut cfg: ExperimentConfig = read_json(path)?;
        if let Some(out) = &cli.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = cli.seed {
            cfg.seeds = vec![seed];
        }
        return Ok(cfg);
    }

    let dataset = args
        .manifest
        .clone()
        .ok_or_else(|| Error::Usage("--manifest is required".into()))?;
    let classifier = args
        .classifier
        .clone()
        .ok_or_else(|| Error::Usage("--classifier is required".into()))?;
    let out_dir = required_out(cli)?;

    let budgets = if args.budget_frac.is_empty() && setting == Setting::Batch {
        (1..=10).map(|i| i as f64 / 10.0).collect()
    } else {
        args.budget_frac.clone()
    };
    let speeds = if args.detector_fps.is_empty() && setting != Setting::Batch {
        vec![1, 2, 4, 8]
    } else {
        args.detector_fps.clone()
    };
    let seeds = if let Some(seed) = cli.seed {
        vec![seed]
    } else if args.seeds.is_empty() {
        vec![1, 2, 3, 4, 5]
    } else {
        args.seeds.clone()
    };
    let thresholds = if args.thresholds.is_empty() {
        (1..20).map(|i| i as f64 / 20.0).collect()
    } else {
        args.thresholds.clone()
    };

    Ok(ExperimentConfig {
        setting,
        selector,
        dataset,
        train_dataset: args.train_manifest.clone(),
        classifier,
        gmm: args.gmm.clone(),
        policy: args.policy.clone(),
        grid: args.grid.into(),
        budgets,
        speeds,
        buffer: args.buffer,
        beta: args.beta,
        pooling: args.pooling.into(),
        target: args.target_activity,
        placements: args.placements,
        top_p: args.top_p,
        thresholds,
        f1_threshold: args.f1_threshold,
        seeds,
        out_dir,
    })
}
