//! `ovtas`: evaluation runs, dataset statistics and toy data generation.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ovtas_core::analysis::BinDimension;
use ovtas_core::faes::PermuteMode;
use ovtas_core::io::{to_json_bytes, LengthPolicy};
use ovtas_core::metrics::F1Matching;
use ovtas_core::pipeline::{load_run_config, run_eval, run_stats, EvalOptions, Method, RunConfig};
use ovtas_core::synth::{generate, SynthConfig};

#[derive(Parser)]
#[command(
    name = "ovtas",
    version,
    about = "Training-free temporal action segmentation by optimal transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment and score every video of the selected splits.
    Eval(EvalArgs),
    /// Video duration, segment count and segment duration statistics.
    Stats(StatsArgs),
    /// Write a synthetic toy dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    Ovtas,
    Stage2Ablation,
    RandomUniform,
    EsMean,
    EsVote,
    EsNrp,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ovtas => Method::Ovtas,
            MethodArg::Stage2Ablation => Method::Stage2Ablation,
            MethodArg::RandomUniform => Method::RandomUniform,
            MethodArg::EsMean => Method::EsMean,
            MethodArg::EsVote => Method::EsVote,
            MethodArg::EsNrp => Method::EsNrp,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BinsArg {
    Duration,
    Segcount,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage1ModeArg {
    Rows,
    Features,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchingArg {
    Optimal,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum LengthPolicyArg {
    Strict,
    Truncate,
}

/// Unset options keep the value from `--config`, or the built-in default.
#[derive(Args)]
struct EvalArgs {
    /// Base configuration: a config file or an earlier results file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Split to evaluate; repeat for several. Default: all splits.
    #[arg(long = "split")]
    splits: Vec<String>,
    /// [default: ovtas]
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Entropic regularization [default: 0.07]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Temporal prior weight [default: 0.04]
    #[arg(long)]
    rho: Option<f64>,
    /// Sinkhorn sweep budget [default: 1000]
    #[arg(long)]
    max_iters: Option<usize>,
    /// Marginal tolerance [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
    /// Equal-splits bin count [default: the video's action count]
    #[arg(long)]
    k_bins: Option<usize>,
    /// Non-repetition penalty of es_nrp [default: 0.05]
    #[arg(long)]
    lambda: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ablate_prior: bool,
    #[arg(long)]
    ablate_l2: bool,
    #[arg(long)]
    ablate_stage1: bool,
    /// Same as `--method stage2_ablation`.
    #[arg(long)]
    ablate_stage2: bool,
    /// What `--ablate-stage1` shuffles [default: rows]
    #[arg(long, value_enum)]
    stage1_mode: Option<Stage1ModeArg>,
    /// Keep the manifest action order instead of a seeded shuffle.
    #[arg(long)]
    no_shuffle_actions: bool,
    /// Action label left out of every metric.
    #[arg(long, value_name = "LABEL")]
    ignore_background: Option<String>,
    /// [default: optimal]
    #[arg(long, value_enum)]
    f1_matching: Option<MatchingArg>,
    /// [default: truncate]
    #[arg(long, value_enum)]
    length_policy: Option<LengthPolicyArg>,
    /// Add a binned breakdown of the metrics.
    #[arg(long, value_enum)]
    bins: Option<BinsArg>,
    /// Bin edges overriding the dataset preset, e.g. `0,60,120`.
    #[arg(long, value_delimiter = ',')]
    bin_edges: Option<Vec<f64>>,
    /// Record failing videos in the report instead of aborting.
    #[arg(long)]
    skip_failures: bool,
    /// Results file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-video predicted label files.
    #[arg(long)]
    labels_out: Option<PathBuf>,
    /// Parallel videos [default: available cores]
    #[arg(long)]
    jobs: Option<usize>,
}

impl EvalArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c: RunConfig = match &self.config {
            Some(path) => load_run_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.manifest {
            c.manifest = m.clone();
        }
        if !self.splits.is_empty() {
            c.splits = self.splits.clone();
        }
        if let Some(m) = self.method {
            c.method = m.into();
        }
        if self.ablate_stage2 {
            if !matches!(c.method, Method::Ovtas | Method::Stage2Ablation) {
                bail!("--ablate-stage2 cannot be combined with --method {:?}", c.method);
            }
            c.method = Method::Stage2Ablation;
        }
        set(&mut c.hp.epsilon, self.epsilon);
        set(&mut c.hp.rho, self.rho);
        set(&mut c.hp.max_iters, self.max_iters);
        set(&mut c.hp.tol, self.tol);
        if self.k_bins.is_some() {
            c.k_bins = self.k_bins;
        }
        set(&mut c.lambda, self.lambda);
        set(&mut c.seed, self.seed);
        c.ablate_prior |= self.ablate_prior;
        c.ablate_l2 |= self.ablate_l2;
        c.ablate_stage1 |= self.ablate_stage1;
        c.skip_failures |= self.skip_failures;
        if self.no_shuffle_actions {
            c.shuffle_actions = false;
        }
        if let Some(m) = self.stage1_mode {
            c.stage1_mode = match m {
                Stage1ModeArg::Rows => PermuteMode::Rows,
                Stage1ModeArg::Features => PermuteMode::Features,
            };
        }
        if self.ignore_background.is_some() {
            c.ignore_background = self.ignore_background.clone();
        }
        if let Some(m) = self.f1_matching {
            c.f1_matching = match m {
                MatchingArg::Optimal => F1Matching::Optimal,
                MatchingArg::Greedy => F1Matching::Greedy,
            };
        }
        if let Some(p) = self.length_policy {
            c.length_policy = match p {
                LengthPolicyArg::Strict => LengthPolicy::Strict,
                LengthPolicyArg::Truncate => LengthPolicy::Truncate,
            };
        }
        if let Some(b) = self.bins {
            c.bins = Some(match b {
                BinsArg::Duration => BinDimension::DurationSeconds,
                BinsArg::Segcount => BinDimension::GtSegmentCount,
            });
        }
        if self.bin_edges.is_some() {
            c.bin_edges = self.bin_edges.clone();
        }
        if c.manifest.as_os_str().is_empty() {
            bail!("--manifest is required (directly or through --config)");
        }
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Split to describe; repeat for several. Default: all splits.
    #[arg(long = "split")]
    splits: Vec<String>,
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to create the dataset in.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().videos)]
    videos: usize,
    #[arg(long, default_value_t = SynthConfig::default().actions)]
    actions: usize,
    #[arg(long, default_value_t = SynthConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = SynthConfig::default().min_frames)]
    min_frames: usize,
    #[arg(long, default_value_t = SynthConfig::default().max_frames)]
    max_frames: usize,
    #[arg(long, default_value_t = SynthConfig::default().signal)]
    signal: f64,
    #[arg(long, default_value_t = SynthConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = SynthConfig::default().bias)]
    bias: f64,
    #[arg(long, default_value_t = SynthConfig::default().jitter)]
    jitter: f64,
    /// Perform actions in vocabulary order.
    #[arg(long)]
    ordered: bool,
    #[arg(long, default_value_t = SynthConfig::default().fps)]
    fps: f64,
    #[arg(long, default_value_t = SynthConfig::default().splits)]
    splits: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => std::io::stdout().write_all(bytes).context("writing to stdout"),
    }
}

fn eval(args: &EvalArgs) -> Result<ExitCode> {
    let config = args.run_config()?;
    let options = EvalOptions {
        jobs: args.jobs.unwrap_or(0),
        labels_out: args.labels_out.clone(),
    };
    let report = run_eval(&config, &options)?;
    emit(&to_json_bytes(&report), args.out.as_deref())?;
    if !report.unconverged.is_empty() {
        log::warn!(
            "{} video(s) stopped above the solver tolerance",
            report.unconverged.len()
        );
    }
    if report.complete {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("ovtas: report incomplete, {} video(s) failed", report.failures.len());
        Ok(ExitCode::FAILURE)
    }
}

fn stats(args: &StatsArgs) -> Result<ExitCode> {
    let report = run_stats(&args.manifest, &args.splits)?;
    emit(&to_json_bytes(&report), args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn synth(args: &SynthArgs) -> Result<ExitCode> {
    let config = SynthConfig {
        videos: args.videos,
        actions: args.actions,
        dim: args.dim,
        min_frames: args.min_frames,
        max_frames: args.max_frames,
        signal: args.signal,
        noise: args.noise,
        bias: args.bias,
        jitter: args.jitter,
        ordered: args.ordered,
        fps: args.fps,
        splits: args.splits,
        seed: args.seed,
    };
    let manifest = generate(&config, &args.out_dir)?;
    println!("{}", manifest.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OVTAS_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Eval(args) => eval(args),
        Command::Stats(args) => stats(args),
        Command::Synth(args) => synth(args),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("ovtas: {e:#}");
        ExitCode::FAILURE
    })
}
