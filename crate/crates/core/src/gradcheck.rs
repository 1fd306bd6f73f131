//! Exact gradient checking. On small instances the sampler is replaced by a
//! deterministic enumerator that walks every terminating action sequence,
//! turning the stochastic objective into an exact finite sum whose gradient
//! can be compared against central finite differences.

use crate::controller::{ActionBundle, Controller};
use crate::engine::{EpisodeSim, EpisodeTrace, StepRecord};
use crate::error::{Error, Result};
use crate::numerics::{finite_difference_grad, ParameterStore, Tensor};
use crate::reinforce::{future_returns, upstream_for_trace};
use crate::tasks::TaskInstance;
use std::time::Instant;

/// One terminating action sequence with its probability under the current
/// policy and the rewards it collects.
pub struct SequenceOutcome {
    pub probability: f64,
    pub trace: EpisodeTrace,
}

impl SequenceOutcome {
    pub fn actions(&self) -> Vec<ActionBundle> {
        self.trace.actions()
    }
}

/// Count the terminating action sequences without running the controller.
/// Only the branching structure matters: every step offers all input (and
/// memory) moves, plus the emit/stay choice unless emission is forced.
pub fn count_sequences(instance: &TaskInstance, budget_factor: f64) -> u128 {
    let budget = crate::engine::step_budget(instance, budget_factor);
    let k_in = instance.mask.input_deltas.len() as u128;
    let k = if instance.mask.memory { k_in * 3 } else { k_in };
    let targets = instance.target.len();
    // f[r] = number of completions with r outputs remaining at the current
    // number of remaining steps; iterate remaining steps from 0 upward.
    let mut f = vec![0u128; targets + 1];
    f[0] = 1;
    for s in 1..=budget {
        let mut next = vec![0u128; targets + 1];
        next[0] = 1;
        for r in 1..=targets.min(s) {
            let emit = f[r - 1];
            let stay = if r < s { f[r] } else { 0 };
            let choices = if r == s { emit } else { emit.saturating_add(stay) };
            next[r] = k.saturating_mul(choices);
        }
        f = next;
    }
    f[targets]
}

fn dfs(
    sim: &EpisodeSim,
    prob: f64,
    steps: &mut Vec<StepRecord>,
    out: &mut Vec<SequenceOutcome>,
    cap: usize,
) -> Result<()> {
    if sim.done() {
        if out.len() >= cap {
            return Err(Error::EnumerationCap {
                count: out.len() as u128 + 1,
                cap: cap as u128,
            });
        }
        out.push(SequenceOutcome {
            probability: prob,
            trace: EpisodeTrace {
                instance: sim.instance.clone(),
                steps: steps.clone(),
                total_reward: sim.total_reward,
                budget: sim.budget,
                mem_len: if sim.instance.mask.memory {
                    sim.budget + 1
                } else {
                    0
                },
            },
        });
        return Ok(());
    }
    let (state, step_out) = sim.compute()?;
    let forced = sim.forced();
    let mem_options: Vec<Option<usize>> = match &step_out.memory_move {
        Some(_) => vec![Some(0), Some(1), Some(2)],
        None => vec![None],
    };
    let out_options: &[usize] = if forced { &[1] } else { &[0, 1] };
    for input in 0..step_out.input_move.len() {
        for &memory in &mem_options {
            for &output in out_options {
                let mut p = prob * step_out.input_move.prob(input);
                if let (Some(m), Some(dist)) = (memory, &step_out.memory_move) {
                    p *= dist.prob(m);
                }
                if !forced {
                    p *= step_out.output_move.prob(output);
                }
                let mut child = sim.clone();
                let record = child.apply(
                    state.clone(),
                    step_out.clone(),
                    ActionBundle {
                        input: Some(input),
                        memory,
                        output,
                    },
                    forced,
                );
                steps.push(record);
                let res = dfs(&child, p, steps, out, cap);
                steps.pop();
                res?;
            }
        }
    }
    Ok(())
}

/// Enumerate every terminating action sequence in lexicographic order of the
/// per-step choices (input, memory, output).
pub fn enumerate_sequences(
    ctrl: &Controller,
    store: &ParameterStore,
    instance: &TaskInstance,
    budget_factor: f64,
    cap: usize,
) -> Result<Vec<SequenceOutcome>> {
    let structural = count_sequences(instance, budget_factor);
    if structural > cap as u128 {
        return Err(Error::EnumerationCap {
            count: structural,
            cap: cap as u128,
        });
    }
    let sim = EpisodeSim::new(ctrl, store, instance, budget_factor)?;
    let mut out = Vec::new();
    let mut steps = Vec::new();
    dfs(&sim, 1.0, &mut steps, &mut out, cap)?;
    Ok(out)
}

fn objective_dfs(sim: &EpisodeSim, prob: f64, prob_sum: &mut f64, objective: &mut f64) -> Result<()> {
    if sim.done() {
        *prob_sum += prob;
        *objective += prob * sim.total_reward;
        return Ok(());
    }
    let (state, step_out) = sim.compute()?;
    let forced = sim.forced();
    let k_mem = if step_out.memory_move.is_some() { 3 } else { 1 };
    let out_options: &[usize] = if forced { &[1] } else { &[0, 1] };
    for input in 0..step_out.input_move.len() {
        for m in 0..k_mem {
            for &output in out_options {
                let mut p = prob * step_out.input_move.prob(input);
                let memory = step_out.memory_move.as_ref().map(|dist| {
                    p *= dist.prob(m);
                    m
                });
                if !forced {
                    p *= step_out.output_move.prob(output);
                }
                let mut child = sim.clone();
                child.apply(
                    state.clone(),
                    step_out.clone(),
                    ActionBundle {
                        input: Some(input),
                        memory,
                        output,
                    },
                    forced,
                );
                objective_dfs(&child, p, prob_sum, objective)?;
            }
        }
    }
    Ok(())
}

/// Total probability mass and exact objective `J = sum_a p(a) R(a)`, where
/// the rewards already are prediction log-probabilities, so `J` is the
/// global objective. Does not retain traces; used by the finite-difference
/// side of the check.
pub fn exact_objective(
    ctrl: &Controller,
    store: &ParameterStore,
    instance: &TaskInstance,
    budget_factor: f64,
    cap: usize,
) -> Result<(f64, f64)> {
    let structural = count_sequences(instance, budget_factor);
    if structural > cap as u128 {
        return Err(Error::EnumerationCap {
            count: structural,
            cap: cap as u128,
        });
    }
    let sim = EpisodeSim::new(ctrl, store, instance, budget_factor)?;
    let mut prob_sum = 0.0;
    let mut objective = 0.0;
    objective_dfs(&sim, 1.0, &mut prob_sum, &mut objective)?;
    Ok((prob_sum, objective))
}

/// Variance-reduction configuration for the exact Reinforce gradient.
#[derive(Debug, Clone, Default)]
pub struct VarianceOptions {
    /// Use future returns `R(a_{t:T})` instead of the whole-episode return.
    pub causality: bool,
    /// Per-timestep baseline subtracted from the Reinforce weight.
    pub baseline: Vec<f64>,
}

/// Exact gradient of the objective: for every sequence, the supervised
/// prediction gradient plus the Reinforce term, both weighted by the
/// sequence probability.
pub fn exact_gradient(
    ctrl: &Controller,
    store: &ParameterStore,
    sequences: &[SequenceOutcome],
    opts: &VarianceOptions,
) -> Result<Vec<Tensor>> {
    let mut grads = store.zero_like();
    for seq in sequences {
        let rewards = seq.trace.rewards();
        let weights: Vec<f64> = if opts.causality {
            future_returns(&rewards)
        } else {
            vec![seq.trace.total_reward; rewards.len()]
        };
        let weights: Vec<f64> = weights
            .iter()
            .enumerate()
            .map(|(t, &w)| w - opts.baseline.get(t).copied().unwrap_or(0.0))
            .collect();
        let upstream = upstream_for_trace(&seq.trace, &weights, seq.probability);
        ctrl.backward_episode(store, &seq.trace, &upstream, &mut grads)?;
    }
    Ok(grads)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub sequence_count: usize,
    pub prob_sum: f64,
    pub objective: f64,
    /// Worst-coordinate comparison `|g1-g2| / max(|g1|,|g2|,1e-7)`.
    pub worst_rel: f64,
    pub worst_name: String,
    pub worst_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub pass: bool,
    pub wall_ms: u128,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Full gradient check on one instance: exact analytic gradient against
/// central finite differences of the exact objective. `inject_sign_flip`
/// is a test hook that negates the analytic gradient so the check must
/// fail; it exists to prove the comparison has teeth.
pub fn check(
    ctrl: &Controller,
    store: &mut ParameterStore,
    instance: &TaskInstance,
    budget_factor: f64,
    eps: f64,
    tolerance: f64,
    cap: usize,
    opts: &VarianceOptions,
    inject_sign_flip: bool,
) -> Result<GradCheckReport> {
    let start = Instant::now();
    let sequences = enumerate_sequences(ctrl, store, instance, budget_factor, cap)?;
    let mut prob_sum = 0.0;
    let mut objective = 0.0;
    for s in &sequences {
        prob_sum += s.probability;
        objective += s.probability * s.trace.total_reward;
    }
    if !objective.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut analytic = exact_gradient(ctrl, store, &sequences, opts)?;
    if inject_sign_flip {
        for t in &mut analytic {
            for v in &mut t.data {
                *v = -*v;
            }
        }
    }
    let config = ctrl.config.clone();
    let numeric = finite_difference_grad(store, eps, |s| {
        let c = Controller::bind(config.clone(), s).expect("bind");
        let (_, j) = exact_objective(&c, s, instance, budget_factor, cap).expect("objective");
        j
    })?;
    let mut worst_rel = 0.0;
    let mut worst_name = String::new();
    let mut worst_index = 0;
    let mut worst_pair = (0.0, 0.0);
    for (id, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (i, (&av, &nv)) in a.data.iter().zip(&n.data).enumerate() {
            let rel = relative_error(av, nv);
            if rel > worst_rel {
                worst_rel = rel;
                worst_name = store.name(id).to_string();
                worst_index = i;
                worst_pair = (av, nv);
            }
        }
    }
    Ok(GradCheckReport {
        sequence_count: sequences.len(),
        prob_sum,
        objective,
        worst_rel,
        worst_name,
        worst_index,
        analytic_at_worst: worst_pair.0,
        numeric_at_worst: worst_pair.1,
        pass: worst_rel <= tolerance && (prob_sum - 1.0).abs() <= 1e-9,
        wall_ms: start.elapsed().as_millis(),
    })
}
