//! Acceptance gate. One test per criterion; each prints a single
//! `criterion N ...: PASS|FAIL` line (run with `-- --nocapture` to see the
//! lines for passing criteria as well).
//!
//! Criteria 7-9 run real training and dominate the wall time.

use std::sync::OnceLock;

use rlntm::controller::{ActionBundle, Controller, ControllerConfig, ControllerKind};
use rlntm::curriculum::{analytic_pmf, Branch, CurriculumState};
use rlntm::engine::{run_episode, EpisodeTrace, RunMode};
use rlntm::gradcheck::{check, enumerate_sequences, exact_gradient, relative_error, VarianceOptions};
use rlntm::numerics::ParameterStore;
use rlntm::reinforce::{upstream_for_trace, BaselineMode};
use rlntm::rng::StreamRng;
use rlntm::tasks::{generate, interface_mask, Task, TaskInstance, VocabSpec};
use rlntm::train::{TrainConfig, Trainer};

fn verdict(line: &str, pass: bool) -> bool {
    println!("criterion {line}: {}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn tiny_config(kind: ControllerKind, task: Task, hidden: usize, payload: usize, beta: f64) -> ControllerConfig {
    ControllerConfig {
        kind,
        hidden,
        window: 1,
        memory_dim: 3,
        vocab: VocabSpec::new(payload),
        mask: interface_mask(task),
        beta,
    }
}

fn random_policy(config: &ControllerConfig, seed: u64) -> (Controller, ParameterStore) {
    let spec = Controller::param_spec(config);
    let store = ParameterStore::gaussian_init(&spec, 0.1, seed).unwrap();
    let ctrl = Controller::bind(config.clone(), &store).unwrap();
    (ctrl, store)
}

// ---------------------------------------------------------------------------
// criterion 1: exact Reinforce gradient vs finite differences, tiny instance
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_reinforce_gradient_exactness() {
    // Copy at complexity 2, vocabulary of 2 symbols, hidden size 4,
    // budget factor 1.5 => 4,923 terminating sequences (< 10^4).
    let mut pass = true;
    for kind in [ControllerKind::DirectAccess, ControllerKind::Lstm] {
        let config = tiny_config(kind, Task::Copy, 4, 1, 0.01);
        let instance = generate(Task::Copy, 2, 1, config.vocab).unwrap();
        let (ctrl, mut store) = random_policy(&config, 1);
        let report = check(
            &ctrl,
            &mut store,
            &instance,
            1.5,
            1e-3,
            1e-4,
            10_000,
            &VarianceOptions::default(),
            false,
        )
        .unwrap();
        println!(
            "  [{kind:?}] sequences={} prob_sum={:.12} worst_rel={:.3e} at {}[{}] wall_ms={}",
            report.sequence_count,
            report.prob_sum,
            report.worst_rel,
            report.worst_name,
            report.worst_index,
            report.wall_ms
        );
        pass &= report.pass
            && report.sequence_count < 10_000
            && (report.prob_sum - 1.0).abs() <= 1e-9
            && report.worst_rel <= 1e-4
            && report.wall_ms < 10_000;
    }
    assert!(verdict(
        "1 (Reinforce gradient matches finite differences, rel <= 1e-4, < 10 s)",
        pass
    ));
}

// ---------------------------------------------------------------------------
// criteria 2 and 3: baseline invariance and causality equivalence
// ---------------------------------------------------------------------------

/// Twenty random tiny policies: ten on Copy (no memory) and ten on
/// ForwardReverse (memory interface enabled).
fn tiny_policy_corpus() -> Vec<(ControllerConfig, TaskInstance, u64)> {
    let mut corpus = Vec::new();
    for seed in 0..10u64 {
        let config = tiny_config(
            if seed % 2 == 0 {
                ControllerKind::DirectAccess
            } else {
                ControllerKind::Lstm
            },
            Task::Copy,
            4,
            2,
            0.01,
        );
        let instance = generate(Task::Copy, 2, seed, config.vocab).unwrap();
        corpus.push((config, instance, seed));
    }
    for seed in 0..10u64 {
        let config = tiny_config(
            if seed % 2 == 0 {
                ControllerKind::Lstm
            } else {
                ControllerKind::DirectAccess
            },
            Task::ForwardReverse,
            4,
            2,
            0.01,
        );
        let instance = generate(Task::ForwardReverse, 2, seed, config.vocab).unwrap();
        corpus.push((config, instance, 100 + seed));
    }
    corpus
}

fn max_abs_diff(a: &[rlntm::numerics::Tensor], b: &[rlntm::numerics::Tensor]) -> f64 {
    let mut worst: f64 = 0.0;
    for (ta, tb) in a.iter().zip(b) {
        for (&va, &vb) in ta.data.iter().zip(&tb.data) {
            worst = worst.max((va - vb).abs());
        }
    }
    worst
}

#[test]
fn criterion_2_baseline_invariance() {
    let mut worst: f64 = 0.0;
    for (config, instance, seed) in tiny_policy_corpus() {
        let (ctrl, store) = random_policy(&config, seed);
        let sequences = enumerate_sequences(&ctrl, &store, &instance, 1.25, 100_000).unwrap();
        let zero = exact_gradient(
            &ctrl,
            &store,
            &sequences,
            &VarianceOptions {
                causality: true,
                baseline: Vec::new(),
            },
        )
        .unwrap();
        let mut rng = StreamRng::new(seed, "acceptance/baselines");
        let budget = sequences.iter().map(|s| s.trace.steps.len()).max().unwrap();
        let baseline: Vec<f64> = (0..budget).map(|_| 4.0 * rng.next_f64() - 2.0).collect();
        let with_baseline = exact_gradient(
            &ctrl,
            &store,
            &sequences,
            &VarianceOptions {
                causality: true,
                baseline,
            },
        )
        .unwrap();
        worst = worst.max(max_abs_diff(&zero, &with_baseline));
    }
    println!("  worst abs deviation across 20 policies: {worst:.3e}");
    assert!(verdict(
        "2 (arbitrary fixed baselines leave the exact gradient unchanged, <= 1e-9)",
        worst <= 1e-9
    ));
}

#[test]
fn criterion_3_causality_equivalence() {
    let mut worst: f64 = 0.0;
    for (config, instance, seed) in tiny_policy_corpus() {
        let (ctrl, store) = random_policy(&config, seed);
        let sequences = enumerate_sequences(&ctrl, &store, &instance, 1.25, 100_000).unwrap();
        let full = exact_gradient(
            &ctrl,
            &store,
            &sequences,
            &VarianceOptions {
                causality: false,
                baseline: Vec::new(),
            },
        )
        .unwrap();
        let future = exact_gradient(
            &ctrl,
            &store,
            &sequences,
            &VarianceOptions {
                causality: true,
                baseline: Vec::new(),
            },
        )
        .unwrap();
        worst = worst.max(max_abs_diff(&full, &future));
    }
    println!("  worst abs deviation across 20 policies: {worst:.3e}");
    assert!(verdict(
        "3 (future-return weighting equals full-return weighting, <= 1e-9)",
        worst <= 1e-9
    ));
}

// ---------------------------------------------------------------------------
// criterion 4: backprop vs finite differences on a deterministic objective
// ---------------------------------------------------------------------------

/// Deterministic episode objective: replay a fixed action script and sum the
/// log-probabilities of the scripted actions plus the prediction rewards.
fn scripted_objective(
    config: &ControllerConfig,
    store: &ParameterStore,
    instance: &TaskInstance,
    actions: &[ActionBundle],
    budget_factor: f64,
) -> f64 {
    let ctrl = Controller::bind(config.clone(), store).unwrap();
    let trace = run_episode(&ctrl, store, instance, RunMode::Scripted(actions), budget_factor).unwrap();
    scripted_trace_objective(&trace)
}

fn scripted_trace_objective(trace: &EpisodeTrace) -> f64 {
    let mut j = trace.total_reward;
    for s in &trace.steps {
        if let Some(i) = s.actions.input {
            j += s.cache.log_prob_input(i);
        }
        if let Some(m) = s.actions.memory {
            j += s.cache.log_prob_memory(m);
        }
        if !s.forced_output {
            j += s.cache.log_prob_output(s.actions.output);
        }
    }
    j
}

/// Fourth-order central differences: truncation O(eps^4), which permits a
/// larger step and therefore a lower roundoff-noise floor than the 2-point
/// rule — needed to resolve coordinates whose gradients sit near zero.
fn finite_difference_grad_4th<F>(
    store: &mut ParameterStore,
    eps: f64,
    mut objective: F,
) -> Vec<rlntm::numerics::Tensor>
where
    F: FnMut(&ParameterStore) -> f64,
{
    let mut grads = store.zero_like();
    for id in 0..store.len() {
        for j in 0..store.value(id).len() {
            let orig = store.value(id).data[j];
            let mut eval = |delta: f64, store: &mut ParameterStore| {
                store.value_mut(id).data[j] = orig + delta;
                objective(store)
            };
            let f1p = eval(eps, store);
            let f1m = eval(-eps, store);
            let f2p = eval(2.0 * eps, store);
            let f2m = eval(-2.0 * eps, store);
            store.value_mut(id).data[j] = orig;
            grads[id].data[j] = (8.0 * (f1p - f1m) - (f2p - f2m)) / (12.0 * eps);
        }
    }
    grads
}

fn backprop_worst_rel(kind: ControllerKind, task: Task, seed: u64, beta: f64, eps: f64) -> f64 {
    let config = tiny_config(kind, task, 6, 3, beta);
    let spec = Controller::param_spec(&config);
    let mut store = ParameterStore::gaussian_init(&spec, 0.1, seed).unwrap();
    let ctrl = Controller::bind(config.clone(), &store).unwrap();
    let instance = generate(task, 2, seed, config.vocab).unwrap();
    let trace = run_episode(&ctrl, &store, &instance, RunMode::Sample { seed }, 1.5).unwrap();
    let actions = trace.actions();
    let weights = vec![1.0; trace.steps.len()];
    let upstream = upstream_for_trace(&trace, &weights, 1.0);
    let mut analytic = store.zero_like();
    ctrl.backward_episode(&store, &trace, &upstream, &mut analytic).unwrap();
    let numeric = finite_difference_grad_4th(&mut store, eps, |s| {
        scripted_objective(&config, s, &instance, &actions, 1.5)
    });
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        for (&av, &nv) in a.data.iter().zip(&n.data) {
            worst = worst.max(relative_error(av, nv));
        }
    }
    worst
}

#[test]
fn criterion_4_backprop_correctness() {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let kind = if seed % 2 == 0 {
            ControllerKind::DirectAccess
        } else {
            ControllerKind::Lstm
        };
        // even seeds exercise the memory tape (ForwardReverse), odd ones the
        // plain input/output interface (Copy)
        let task = if seed % 4 < 2 { Task::ForwardReverse } else { Task::Copy };
        let rel = backprop_worst_rel(kind, task, seed, 0.01, 1e-2);
        worst = worst.max(rel);
    }
    println!("  worst relative error over 20 seeds, both controllers: {worst:.3e}");
    assert!(verdict(
        "4 (backprop matches finite differences, rel <= 1e-5, 20 seeds)",
        worst <= 1e-5
    ));
}

/// Scan harness for picking the finite-difference step of criterion 4.
#[test]
#[ignore]
fn scan_backprop_eps() {
    for beta in [0.01, 1.0] {
        for eps in [1e-4, 3e-4, 1e-3, 3e-3, 1e-2] {
            let mut worst: f64 = 0.0;
            for seed in 0..20u64 {
                let kind = if seed % 2 == 0 {
                    ControllerKind::DirectAccess
                } else {
                    ControllerKind::Lstm
                };
                let task = if seed % 4 < 2 { Task::ForwardReverse } else { Task::Copy };
                worst = worst.max(backprop_worst_rel(kind, task, seed, beta, eps));
            }
            println!("beta={beta} eps={eps:.0e} worst_rel={worst:.3e}");
        }
    }
}

// ---------------------------------------------------------------------------
// criterion 5: curriculum sampling distribution
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_curriculum_distribution() {
    let (current, max) = (5usize, 11usize);
    let state = CurriculumState::new(max, 200);
    let mut state = state;
    state.current = current;
    let pmf = analytic_pmf(current, max);
    let draws = 1_000_000usize;
    let mut counts = vec![0usize; max + 1];
    let mut branches = [0usize; 3];
    let mut rng = StreamRng::new(12345, "acceptance/curriculum");
    for _ in 0..draws {
        let (d, branch) = state.sample_complexity_with_branch(&mut rng);
        counts[d] += 1;
        branches[match branch {
            Branch::UniformAll => 0,
            Branch::UniformUpTo => 1,
            Branch::AboveCurrent => 2,
        }] += 1;
    }
    let tv: f64 = (1..=max)
        .map(|d| (counts[d] as f64 / draws as f64 - pmf[d - 1]).abs())
        .sum::<f64>()
        / 2.0;
    let freq: Vec<f64> = branches.iter().map(|&b| b as f64 / draws as f64).collect();
    println!(
        "  TV distance = {tv:.5}; branch frequencies = {:.4}/{:.4}/{:.4} (want 0.10/0.25/0.65)",
        freq[0], freq[1], freq[2]
    );
    let pass = tv < 0.01
        && (freq[0] - 0.10).abs() <= 0.005
        && (freq[1] - 0.25).abs() <= 0.005
        && (freq[2] - 0.65).abs() <= 0.005;
    assert!(verdict(
        "5 (10^6 curriculum draws match the analytic mixture, TV < 0.01)",
        pass
    ));
}

// ---------------------------------------------------------------------------
// criterion 6: forcing guarantee
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_forcing_guarantee() {
    let tasks = [
        Task::Copy,
        Task::DuplicatedInput,
        Task::Reverse,
        Task::RepeatCopy,
        Task::ForwardReverse,
    ];
    let mut rng = StreamRng::new(99, "acceptance/forcing");
    let mut pass = true;
    for trial in 0..10_000u64 {
        let task = tasks[rng.next_below(tasks.len())];
        let complexity = task.min_complexity() + rng.next_below(3);
        let kind = if rng.next_below(2) == 0 {
            ControllerKind::DirectAccess
        } else {
            ControllerKind::Lstm
        };
        let config = tiny_config(kind, task, 4, 3, 0.01);
        let (ctrl, store) = random_policy(&config, rng.next_u64());
        let instance = generate(task, complexity, rng.next_u64(), config.vocab).unwrap();
        let trace = run_episode(
            &ctrl,
            &store,
            &instance,
            RunMode::Sample { seed: rng.next_u64() },
            2.0,
        )
        .unwrap();
        let emitted = trace.steps.iter().filter(|s| s.prediction.is_some()).count();
        if emitted != instance.target.len() || trace.steps.len() > trace.budget {
            println!(
                "  violation at trial {trial}: emitted {emitted} of {} within {} steps (budget {})",
                instance.target.len(),
                trace.steps.len(),
                trace.budget
            );
            pass = false;
            break;
        }
    }
    assert!(verdict(
        "6 (forcing rule emits exactly target-length predictions, 10^4 episodes)",
        pass
    ));
}

// ---------------------------------------------------------------------------
// criteria 7-9: training reproduction and ablation
// ---------------------------------------------------------------------------

/// Desk-scale training configuration shared by criteria 7-9. Sizes that are
/// not pinned by the criteria (hidden width, batch size, baseline flavour)
/// are scaled down so the gate finishes in minutes rather than hours.
fn campaign_config(
    task: Task,
    kind: ControllerKind,
    hidden: usize,
    max_complexity: usize,
    seed: u64,
) -> TrainConfig {
    let mut cfg = TrainConfig::new(task, kind);
    cfg.hidden = hidden;
    cfg.baseline_hidden = hidden;
    cfg.batch = 50;
    cfg.baseline_mode = BaselineMode::Online;
    cfg.max_complexity = max_complexity;
    cfg.max_updates = 20_000;
    cfg.eval_every = 100;
    cfg.eval_episodes = 50;
    cfg.seed = seed;
    cfg
}

/// Train until the first perfect greedy evaluation at max complexity (50
/// fresh episodes with zero-one loss 0) or until the update limit.
fn train_until_perfect(cfg: TrainConfig) -> (bool, usize, Trainer) {
    let mut trainer = Trainer::new(cfg).unwrap();
    while trainer.update < trainer.config.max_updates {
        trainer.step().unwrap();
        if trainer.update % trainer.config.eval_every == 0 {
            let loss = trainer
                .evaluate(trainer.config.max_complexity, trainer.config.eval_episodes)
                .unwrap();
            if loss == 0.0 {
                let updates = trainer.update;
                return (true, updates, trainer);
            }
        }
    }
    let updates = trainer.update;
    (false, updates, trainer)
}

/// Run seeds 1..=3, stopping as soon as `needed` successes are reached or
/// have become unreachable. Returns (passed, last successful trainer).
fn seed_campaign(
    label: &str,
    task: Task,
    kind: ControllerKind,
    hidden: usize,
    max_complexity: usize,
    needed: usize,
) -> (bool, Option<Trainer>) {
    let mut successes = 0usize;
    let mut remaining = 3usize;
    let mut winner = None;
    for seed in 1..=3u64 {
        let (solved, updates, trainer) =
            train_until_perfect(campaign_config(task, kind, hidden, max_complexity, seed));
        remaining -= 1;
        if solved {
            successes += 1;
            winner = Some(trainer);
        }
        println!(
            "  {label} seed {seed}: {} after {updates} updates",
            if solved { "solved" } else { "not solved" }
        );
        if successes >= needed || successes + remaining < needed {
            break;
        }
    }
    (successes >= needed, winner)
}

struct ForwardReverseCampaign {
    passed: bool,
    winner: Option<Trainer>,
}

static FORWARD_REVERSE: OnceLock<ForwardReverseCampaign> = OnceLock::new();

/// ForwardReverse is trained at max complexity 11 — harder than the
/// required 7 — so the learned policy cannot specialize to a single episode
/// length by counting steps; the over-trained policy waits for the
/// terminator before emitting, which is also the behaviour criterion 8
/// checks. Success is judged on a greedy evaluation at complexity 7.
fn forward_reverse_campaign() -> &'static ForwardReverseCampaign {
    FORWARD_REVERSE.get_or_init(|| {
        let mut passed = false;
        let mut winner = None;
        for seed in 1..=3u64 {
            let cfg = campaign_config(Task::ForwardReverse, ControllerKind::DirectAccess, 64, 11, seed);
            let mut trainer = Trainer::new(cfg).unwrap();
            let outcome = trainer.run(|_| {}).unwrap();
            let eval7 = trainer.evaluate(7, trainer.config.eval_episodes).unwrap();
            let solved = outcome.solved || eval7 == 0.0;
            println!(
                "  forward-reverse/direct-access trained at c=11, judged at c=7, seed {seed}: {} after {} updates (eval loss at 7: {eval7:.4})",
                if solved { "solved" } else { "not solved" },
                outcome.updates
            );
            if solved {
                passed = true;
                winner = Some(trainer);
                break;
            }
        }
        ForwardReverseCampaign { passed, winner }
    })
}

#[test]
fn criterion_7_training_reproduction() {
    let mut pass = true;
    for (task, kind, hidden) in [
        (Task::Copy, ControllerKind::DirectAccess, 32),
        (Task::Copy, ControllerKind::Lstm, 32),
        (Task::DuplicatedInput, ControllerKind::DirectAccess, 32),
        (Task::DuplicatedInput, ControllerKind::Lstm, 64),
    ] {
        let (ok, _) = seed_campaign(
            &format!("{}/{kind:?} c=11", task.name()),
            task,
            kind,
            hidden,
            11,
            2,
        );
        pass &= ok;
    }
    for task in [Task::Reverse, Task::RepeatCopy] {
        let (ok, _) = seed_campaign(
            &format!("{}/direct-access c=7", task.name()),
            task,
            ControllerKind::DirectAccess,
            64,
            7,
            1,
        );
        pass &= ok;
    }
    pass &= forward_reverse_campaign().passed;
    assert!(verdict(
        "7 (Copy/DuplicatedInput solved by both controllers at c>=11 for 2/3 seeds; Reverse/ForwardReverse/RepeatCopy by direct-access at c>=7 for 1/3 seeds)",
        pass
    ));
}

#[test]
fn criterion_8_forward_reverse_memory_use() {
    let campaign = forward_reverse_campaign();
    let mut pass = campaign.passed;
    if let Some(trainer) = &campaign.winner {
        let cfg = &trainer.config;
        for seed in 0..5u64 {
            let instance = generate(Task::ForwardReverse, 7, 1000 + seed, cfg.vocab()).unwrap();
            let terminator_pos = instance.input.len() - 1;
            let trace = run_episode(
                &trainer.ctrl,
                &trainer.store,
                &instance,
                RunMode::Greedy,
                cfg.budget_factor,
            )
            .unwrap();
            let reached = trace
                .steps
                .iter()
                .position(|s| s.input_pos == terminator_pos)
                .unwrap_or(trace.steps.len());
            let early: usize = trace.steps[..reached]
                .iter()
                .filter(|s| s.prediction.is_some())
                .count();
            println!(
                "  episode {seed}: input head reaches terminator at step {reached}; {early} predictions before that"
            );
            pass &= early == 0;
        }
    } else {
        println!("  no successful ForwardReverse checkpoint available");
    }
    assert!(verdict(
        "8 (successful ForwardReverse trace emits no predictions before the input head reaches the terminator)",
        pass
    ));
}

#[test]
fn criterion_9_no_curriculum_ablation() {
    let mut pass = true;
    for seed in 1..=3u64 {
        let mut cfg = campaign_config(Task::Reverse, ControllerKind::DirectAccess, 64, 7, seed);
        cfg.curriculum = false;
        let mut trainer = Trainer::new(cfg).unwrap();
        let mut min_eval = f64::INFINITY;
        let mut window: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
        let mut min_window_mean = f64::INFINITY;
        while trainer.update < trainer.config.max_updates {
            let record = trainer.step().unwrap();
            window.push_back(record.mean_zero_one);
            if window.len() > trainer.config.loss_window {
                window.pop_front();
            }
            if window.len() == trainer.config.loss_window {
                min_window_mean =
                    min_window_mean.min(window.iter().sum::<f64>() / window.len() as f64);
            }
            if trainer.update % trainer.config.eval_every == 0 {
                let loss = trainer
                    .evaluate(trainer.config.max_complexity, trainer.config.eval_episodes)
                    .unwrap();
                min_eval = min_eval.min(loss);
            }
        }
        let failed_to_learn = min_eval >= 0.2 && min_window_mean >= 0.2;
        println!(
            "  seed {seed}: min greedy eval loss {min_eval:.3}, min windowed training loss {min_window_mean:.3}, solved: {} -> {}",
            min_eval == 0.0,
            if failed_to_learn { "stayed above 0.2 (expected)" } else { "dipped below 0.2" }
        );
        pass &= failed_to_learn;
    }
    assert!(verdict(
        "9 (without the curriculum, Reverse never reaches loss < 0.2 in 20k updates, 3/3 seeds)",
        pass
    ));
}

// ---------------------------------------------------------------------------
// criterion 10: determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>) {
        let ckpt = dir.path().join(format!("{tag}.json"));
        let log = dir.path().join(format!("{tag}.log"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_rlntm"))
            .args([
                "train",
                "--task",
                "copy",
                "--controller",
                "direct-access",
                "--hidden",
                "8",
                "--baseline",
                "online",
                "--batch",
                "5",
                "--payload",
                "3",
                "--max-complexity",
                "3",
                "--max-updates",
                "30",
                "--eval-every",
                "10",
                "--eval-episodes",
                "5",
                "--seed",
                "7",
            ])
            .arg("--checkpoint")
            .arg(&ckpt)
            .arg("--log")
            .arg(&log)
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(status.success());
        (std::fs::read(ckpt).unwrap(), std::fs::read(log).unwrap())
    };
    let (ckpt_a, log_a) = run("a");
    let (ckpt_b, log_b) = run("b");
    println!(
        "  checkpoint {} bytes, log {} bytes; identical: {}",
        ckpt_a.len(),
        log_a.len(),
        ckpt_a == ckpt_b && log_a == log_b
    );
    assert!(verdict(
        "10 (identical seeds produce byte-identical logs and checkpoints)",
        ckpt_a == ckpt_b && log_a == log_b
    ));
}
