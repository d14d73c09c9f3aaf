//! Batch entry points wiring dataset generation, training, evaluation, and
//! analysis into reproducible experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdp_cli::ablate::compare_ablations;
use cdp_cli::analyze_driver::{
    analyze_consistency, analyze_rewards, analyze_scatter_dataset, analyze_scatter_records,
};
use cdp_cli::checkpoint::load_checkpoint;
use cdp_cli::dataset_io::{load_dataset, save_dataset};
use cdp_cli::error::{CliError, Result};
use cdp_cli::eval_driver::{evaluate, load_or_measure_anchors, write_report_csv};
use cdp_cli::maze_file::load_maze;
use cdp_cli::records_io::{load_records, save_records, RecordsFile};
use cdp_cli::runcfg::RunConfig;
use cdp_cli::train_driver::train;

use cdp_core::env::{generate_dataset, mix_datasets, PointMazeDesk, PolicyKind};

#[derive(Parser)]
#[command(
    name = "cdp",
    version,
    about = "Contrastive diffusion planning on desk-scale offline RL tasks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an offline dataset from a behavior policy, optionally mixed
    /// with expert episodes.
    GenData(GenDataArgs),
    /// Train the denoiser, return predictor, and projector.
    Train(TrainArgs),
    /// Evaluate a checkpoint with closed-loop planning over seeded episodes.
    Eval(EvalArgs),
    /// Produce analysis CSV/SVG artifacts from records or datasets.
    Analyze(AnalyzeArgs),
    /// Train and evaluate all ablation variants on one dataset.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct CommonConfig {
    /// key=value config file; command-line flags win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra config overrides as key=value (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl CommonConfig {
    fn build(&self, seed: Option<u64>) -> Result<RunConfig> {
        let mut run = RunConfig::default();
        if let Some(path) = &self.config {
            run.load_into(path)?;
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got '{kv}'")))?;
            run.apply_pair(k.trim(), v.trim())?;
        }
        if let Some(seed) = seed {
            run.seed = seed;
        }
        Ok(run)
    }
}

#[derive(Args)]
struct GenDataArgs {
    /// Environment name.
    #[arg(long, default_value = "pointmaze-desk")]
    env: String,
    /// Behavior policy: expert | medium | random.
    #[arg(long)]
    policy: String,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    /// Fraction of episodes replaced by expert ones.
    #[arg(long, default_value_t = 0.0)]
    mix_expert_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dataset file (JSON lines).
    #[arg(long)]
    out: PathBuf,
    /// Optional maze layout JSON.
    #[arg(long)]
    maze_file: Option<PathBuf>,
    /// Dense (negative-distance) debug reward instead of the sparse goal
    /// reward.
    #[arg(long, default_value_t = false)]
    dense_reward: bool,
    #[command(flatten)]
    common: CommonConfig,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file produced by gen-data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    /// none | no-contrast | positives-only.
    #[arg(long)]
    ablation: Option<String>,
    /// sr | srd.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output run directory.
    #[arg(long)]
    out: PathBuf,
    /// Resume from an existing checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Checkpoint cadence in steps (0 = final only).
    #[arg(long)]
    ckpt_every: Option<usize>,
    #[command(flatten)]
    common: CommonConfig,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "pointmaze-desk")]
    env: String,
    /// Number of evaluation seeds.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 1000)]
    seed_start: u64,
    /// Guidance scale.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    /// Anchor cache file; defaults to anchors.json inside --out.
    #[arg(long)]
    anchors: Option<PathBuf>,
    #[arg(long)]
    maze_file: Option<PathBuf>,
    #[command(flatten)]
    common: CommonConfig,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Episode records from eval.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Dataset file (scatter only).
    #[arg(long)]
    data: Option<PathBuf>,
    /// rewards | consistency | scatter.
    #[arg(long)]
    what: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Consistency lookahead; defaults to the records' horizon.
    #[arg(long)]
    lookahead: Option<usize>,
    #[command(flatten)]
    common: CommonConfig,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    eval_seeds: usize,
    #[arg(long, default_value_t = 1000)]
    eval_seed_start: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    common: CommonConfig,
}

fn make_env(name: &str, maze_file: Option<&Path>, dense: bool) -> Result<PointMazeDesk> {
    if name != "pointmaze-desk" {
        return Err(CliError::Validation(format!(
            "unknown environment '{name}' (available: pointmaze-desk)"
        )));
    }
    let mut env = PointMazeDesk::default();
    if let Some(path) = maze_file {
        env.layout = load_maze(path)?;
    }
    env.dense_reward = dense;
    Ok(env)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Io(format!("create {}: {e}", path.display())))
}

fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let run = args.common.build(Some(args.seed))?;
    if args.episodes == 0 {
        return Err(CliError::Validation("--episodes must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&args.mix_expert_ratio) {
        return Err(CliError::Validation(format!(
            "--mix-expert-ratio {} outside [0, 1]",
            args.mix_expert_ratio
        )));
    }
    let env = make_env(&args.env, args.maze_file.as_deref(), args.dense_reward)?;
    let kind = PolicyKind::parse(&args.policy)?;
    let ret = run.return_config();
    let base = generate_dataset(&env, kind, args.episodes, args.seed, ret)?;
    let dataset = if args.mix_expert_ratio > 0.0 {
        let needed = (args.mix_expert_ratio * args.episodes as f64).round() as usize;
        let expert = generate_dataset(&env, PolicyKind::Expert, needed.max(1), args.seed ^ 0xe4e7, ret)?;
        mix_datasets(&base, &expert, args.mix_expert_ratio, args.seed ^ 0x313)?
    } else {
        base
    };
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    save_dataset(&args.out, &dataset)?;
    run.save(&args.out.with_extension("config.txt"))?;
    println!(
        "wrote {} episodes ({} transitions) to {}",
        dataset.episodes().len(),
        dataset.transition_count(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut run = args.common.build(args.seed)?;
    if let Some(steps) = args.steps {
        run.steps = steps;
    }
    if let Some(ablation) = &args.ablation {
        run.ablation = ablation.clone();
    }
    if let Some(strategy) = &args.strategy {
        run.strategy = strategy.clone();
    }
    if let Some(every) = args.ckpt_every {
        run.ckpt_every = every;
    }
    run.ablation()?;
    run.strategy_kind()?;
    let dataset = load_dataset(&args.data)?;
    ensure_dir(&args.out)?;
    let arts = train(&dataset, &run, &args.out, args.resume.as_deref())?;
    if let Some(report) = arts.final_loss {
        println!(
            "trained {} steps: loss_d={:.6} loss_v={:.6} loss_c={:.6} total={:.6}",
            run.steps, report.loss_d, report.loss_v, report.loss_c, report.total
        );
    }
    println!("checkpoint: {}", arts.checkpoint.display());
    println!("metrics:    {}", arts.metrics.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mut run = args.common.build(None)?;
    if let Some(rho) = args.rho {
        run.rho = rho;
    }
    if let Some(threads) = args.threads {
        run.threads = threads;
    }
    if args.seeds == 0 {
        return Err(CliError::Validation("--seeds must be >= 1".into()));
    }
    let env = make_env(&args.env, args.maze_file.as_deref(), false)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    ensure_dir(&args.out)?;
    let anchors_path = args
        .anchors
        .clone()
        .unwrap_or_else(|| args.out.join("anchors.json"));
    let anchors = load_or_measure_anchors(&anchors_path, &env, 100, 10_000, run.gamma)?;
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| args.seed_start + i).collect();
    let (report, records) = evaluate(
        &ckpt,
        &env,
        &seeds,
        run.rho,
        run.max_episode_steps,
        run.gamma,
        run.threads,
        &anchors,
        run.fingerprint(),
    )?;
    write_report_csv(&args.out.join("report.csv"), &seeds, &report)?;
    save_records(
        &args.out.join("records.jsonl"),
        &RecordsFile {
            spec: ckpt.spec,
            rho: run.rho,
            fingerprint: run.fingerprint(),
            norm: ckpt.norm.clone(),
            records,
        },
    )?;
    run.save(&args.out.join("run_config.txt"))?;
    println!(
        "evaluated {} seeds: mean={:.4} std={:.4} normalized={:.2}",
        seeds.len(),
        report.mean,
        report.std,
        report.normalized
    );
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let run = args.common.build(None)?;
    ensure_dir(&args.out)?;
    match args.what.as_str() {
        "rewards" => {
            let records = load_records(args.records.as_ref().ok_or_else(|| {
                CliError::Usage("--what rewards needs --records".into())
            })?)?;
            analyze_rewards(&records, args.bins, &args.out)?;
        }
        "consistency" => {
            let records = load_records(args.records.as_ref().ok_or_else(|| {
                CliError::Usage("--what consistency needs --records".into())
            })?)?;
            let lookahead = args.lookahead.unwrap_or(records.spec.horizon);
            analyze_consistency(&records, lookahead, &args.out)?;
        }
        "scatter" => match (&args.records, &args.data) {
            (Some(records), None) => {
                analyze_scatter_records(&load_records(records)?, &args.out)?;
            }
            (None, Some(data)) => {
                analyze_scatter_dataset(&load_dataset(data)?, &args.out)?;
            }
            _ => {
                return Err(CliError::Usage(
                    "--what scatter needs exactly one of --records or --data".into(),
                ))
            }
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown analysis '{other}' (rewards|consistency|scatter)"
            )))
        }
    }
    run.save(&args.out.join("run_config.txt"))?;
    println!("analysis '{}' written to {}", args.what, args.out.display());
    Ok(())
}

fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let mut run = args.common.build(args.seed)?;
    if let Some(threads) = args.threads {
        run.threads = threads;
    }
    let dataset = load_dataset(&args.data)?;
    let env = make_env("pointmaze-desk", None, false)?;
    ensure_dir(&args.out)?;
    let anchors = load_or_measure_anchors(
        &args.out.join("anchors.json"),
        &env,
        100,
        10_000,
        run.gamma,
    )?;
    let seeds: Vec<u64> = (0..args.eval_seeds as u64)
        .map(|i| args.eval_seed_start + i)
        .collect();
    let outcome = compare_ablations(&dataset, &run, &env, &seeds, &anchors, run.threads, &args.out)?;
    run.save(&args.out.join("run_config.txt"))?;
    for v in &outcome.variants {
        println!(
            "{:<16} mean={:.4} std={:.4} normalized={:.2}",
            v.name, v.report.mean, v.report.std, v.report.normalized
        );
    }
    println!(
        "welch one-sided (full-sr > no-contrast): t={:.3} df={:.1} p={:.4}",
        outcome.welch_t, outcome.welch_df, outcome.p_one_sided
    );
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::GenData(args) => cmd_gen_data(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Eval(args) => cmd_eval(args),
        Cmd::Analyze(args) => cmd_analyze(args),
        Cmd::Ablate(args) => cmd_ablate(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
