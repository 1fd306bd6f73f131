//! Command-line surface: `train`, `gradcheck`, `trace`, and `eval`.
//!
//! Exit codes: 0 success, 1 check/eval failure, 2 usage error,
//! 3 numeric fault.

use clap::{Args, Parser, Subcommand};
use rlntm::checkpoint::{load_checkpoint, save_checkpoint, validate_shapes};
use rlntm::controller::{Controller, ControllerKind};
use rlntm::engine::{render_trace, run_episode, RunMode};
use rlntm::error::Error;
use rlntm::gradcheck::{check, VarianceOptions};
use rlntm::numerics::ParameterStore;
use rlntm::reinforce::BaselineMode;
use rlntm::tasks::{generate, Task};
use rlntm::train::{TrainConfig, Trainer};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rlntm", about = "RL-NTM training, gradient checking, tracing and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a controller and write a checkpoint plus a line-delimited log.
    Train(TrainArgs),
    /// Exhaustive Reinforce gradient check on an enumerable instance.
    Gradcheck(GradcheckArgs),
    /// Render the execution trace of one episode from a checkpoint.
    Trace(TraceArgs),
    /// Greedy evaluation of a checkpoint at a fixed complexity.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long, value_enum, default_value = "lstm")]
    controller: ControllerKind,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 200)]
    batch: usize,
    #[arg(long, default_value_t = 5.0)]
    clip_controller: f64,
    #[arg(long, default_value_t = 2.0)]
    clip_baseline: f64,
    #[arg(long, default_value_t = 0.1)]
    init_std: f64,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 35)]
    memory_dim: usize,
    #[arg(long, default_value_t = 2.0)]
    budget_factor: f64,
    #[arg(long, default_value_t = 1)]
    window: usize,
    #[arg(long, default_value_t = 30)]
    payload: usize,
    #[arg(long, default_value_t = 11)]
    max_complexity: usize,
    #[arg(long, default_value_t = 20_000)]
    max_updates: usize,
    #[arg(long, value_enum, default_value = "offline")]
    baseline: BaselineMode,
    #[arg(long)]
    baseline_hidden: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Disable the curriculum: train at max complexity from the start.
    #[arg(long)]
    no_curriculum: bool,
    #[arg(long, default_value_t = 100)]
    eval_every: usize,
    #[arg(long, default_value_t = 50)]
    eval_episodes: usize,
    #[arg(long, default_value_t = 200)]
    loss_window: usize,
    /// Record wall-clock times in the log (makes logs non-reproducible).
    #[arg(long)]
    timings: bool,
    #[arg(long, default_value = "checkpoint.json")]
    checkpoint: PathBuf,
    #[arg(long, default_value = "train.log")]
    log: PathBuf,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(self.task, self.controller);
        cfg.lr = self.lr;
        cfg.momentum = self.momentum;
        cfg.batch = self.batch;
        cfg.clip_controller = self.clip_controller;
        cfg.clip_baseline = self.clip_baseline;
        cfg.init_std = self.init_std;
        cfg.beta = self.beta;
        cfg.hidden = self.hidden;
        cfg.memory_dim = self.memory_dim;
        cfg.budget_factor = self.budget_factor;
        cfg.window = self.window;
        cfg.payload = self.payload;
        cfg.max_complexity = self.max_complexity;
        cfg.max_updates = self.max_updates;
        cfg.baseline_mode = self.baseline;
        cfg.baseline_hidden = self.baseline_hidden.unwrap_or(self.hidden);
        cfg.seed = self.seed;
        cfg.curriculum = !self.no_curriculum;
        cfg.eval_every = self.eval_every;
        cfg.eval_episodes = self.eval_episodes;
        cfg.loss_window = self.loss_window;
        cfg.timings = self.timings;
        cfg
    }
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "copy")]
    task: Task,
    #[arg(long, value_enum, default_value = "lstm")]
    controller: ControllerKind,
    #[arg(long, default_value_t = 2)]
    complexity: usize,
    #[arg(long, default_value_t = 2)]
    payload: usize,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value_t = 3)]
    memory_dim: usize,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 1.5)]
    budget_factor: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    cap: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Subtract per-timestep future returns instead of whole-episode returns.
    #[arg(long)]
    causality: bool,
    /// Test hook: negate the analytic gradient so the check must fail.
    #[arg(long, hide = true)]
    inject_fault: bool,
    /// Test hook: poison one parameter with NaN to trigger a numeric fault.
    #[arg(long, hide = true)]
    inject_nan: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 5)]
    complexity: usize,
    /// Instance seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// greedy or sample
    #[arg(long, default_value = "greedy")]
    mode: String,
    /// Action-sampling seed for `--mode sample`.
    #[arg(long, default_value_t = 1)]
    episode_seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    complexity: usize,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest acceptable mean zero-one loss for exit code 0.
    #[arg(long, default_value_t = 0.0)]
    max_loss: f64,
}

fn cmd_train(args: &TrainArgs) -> Result<u8, Error> {
    let config = args.config();
    let mut trainer = Trainer::new(config.clone())?;
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.log)?;
    let mut log_error = None;
    let result = trainer.run(|record| {
        if log_error.is_none() {
            let line = serde_json::to_string(record).expect("serializable record");
            if let Err(e) = writeln!(log, "{line}") {
                log_error = Some(e);
            }
        }
    });
    if let Some(e) = log_error {
        return Err(Error::Io(e));
    }
    match result {
        Ok(outcome) => {
            save_checkpoint(&trainer.store, &config, &args.checkpoint)?;
            println!("{}", serde_json::to_string(&outcome).expect("serializable"));
            Ok(0)
        }
        Err(err) => {
            // diagnostic checkpoint: parameters are still finite because the
            // update step validates before applying
            if trainer.store.all_finite() {
                let diag = args.checkpoint.with_extension("diagnostic.json");
                save_checkpoint(&trainer.store, &config, &diag)?;
                eprintln!("aborted; diagnostic checkpoint at {}", diag.display());
            }
            Err(err)
        }
    }
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<u8, Error> {
    let mut cfg = TrainConfig::new(args.task, args.controller);
    cfg.hidden = args.hidden;
    cfg.memory_dim = args.memory_dim;
    cfg.payload = args.payload;
    cfg.beta = args.beta;
    cfg.baseline_mode = BaselineMode::None;
    let spec = Controller::param_spec(&cfg.controller_config());
    let mut store = ParameterStore::gaussian_init(&spec, cfg.init_std, args.seed)?;
    if args.inject_nan {
        store.value_mut(0).data[0] = f64::NAN;
    }
    let ctrl = Controller::bind(cfg.controller_config(), &store)?;
    let instance = generate(args.task, args.complexity, args.seed, cfg.vocab())?;
    let opts = VarianceOptions {
        causality: args.causality,
        baseline: Vec::new(),
    };
    let report = check(
        &ctrl,
        &mut store,
        &instance,
        args.budget_factor,
        args.eps,
        args.tolerance,
        args.cap,
        &opts,
        args.inject_fault,
    )?;
    println!("gradient check: {}", if report.pass { "PASS" } else { "FAIL" });
    println!("  sequences        | {}", report.sequence_count);
    println!("  probability mass | {:.12}", report.prob_sum);
    println!("  objective        | {:.12}", report.objective);
    println!(
        "  worst coordinate | {}[{}]: analytic {:.6e}, numeric {:.6e}",
        report.worst_name, report.worst_index, report.analytic_at_worst, report.numeric_at_worst
    );
    println!("  worst rel error  | {:.6e} (tolerance {:.0e})", report.worst_rel, args.tolerance);
    println!("  wall time        | {} ms", report.wall_ms);
    println!(
        "{}",
        serde_json::json!({
            "pass": report.pass,
            "worst_rel": report.worst_rel,
            "sequences": report.sequence_count,
            "wall_ms": report.wall_ms,
        })
    );
    Ok(if report.pass { 0 } else { 1 })
}

fn load_trainer(path: &PathBuf) -> Result<(Trainer, TrainConfig), Error> {
    let (store, config): (ParameterStore, TrainConfig) = load_checkpoint(path)?;
    validate_shapes(&store, &config.param_spec())?;
    let trainer = Trainer::with_store(config.clone(), store)?;
    Ok((trainer, config))
}

fn cmd_trace(args: &TraceArgs) -> Result<u8, Error> {
    let (trainer, config) = load_trainer(&args.checkpoint)?;
    let instance = generate(config.task, args.complexity, args.seed, config.vocab())?;
    let mode = match args.mode.as_str() {
        "greedy" => RunMode::Greedy,
        "sample" => RunMode::Sample {
            seed: args.episode_seed,
        },
        other => {
            return Err(Error::DimensionMismatch(format!(
                "unknown mode `{other}` (expected greedy or sample)"
            )))
        }
    };
    let trace = run_episode(
        &trainer.ctrl,
        &trainer.store,
        &instance,
        mode,
        config.budget_factor,
    )?;
    print!("{}", render_trace(&trace, config.vocab()));
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> Result<u8, Error> {
    let (mut trainer, _config) = load_trainer(&args.checkpoint)?;
    // the evaluation stream is keyed by the update counter; use the seed to
    // decouple independent eval runs
    trainer.update = args.seed as usize;
    let loss = trainer.evaluate(args.complexity, args.episodes)?;
    println!(
        "{}",
        serde_json::json!({
            "complexity": args.complexity,
            "episodes": args.episodes,
            "mean_zero_one_loss": loss,
        })
    );
    Ok(if loss <= args.max_loss { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Train(args) => cmd_train(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
        Cmd::Trace(args) => cmd_trace(args),
        Cmd::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::NumericFault(_)
                | Error::NonFiniteGradient(_)
                | Error::NonFiniteValue(_)
                | Error::NonFiniteObjective => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
