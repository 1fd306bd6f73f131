//! Episode execution: tapes and heads, the step budget, the forced-prediction
//! rule, reward assignment and trace recording.

use crate::controller::{ActionBundle, Controller, ControllerState, StepCache, StepOut};
use crate::error::{Error, Result};
use crate::numerics::{Distribution, ParameterStore};
use crate::rng::StreamRng;
use crate::tasks::{TaskInstance, VocabSpec};

/// Clamp `pos + delta` into `[0, len - 1]`.
pub fn move_head(pos: usize, delta: i64, len: usize) -> usize {
    debug_assert!(pos < len);
    let p = pos as i64 + delta;
    p.clamp(0, len as i64 - 1) as usize
}

/// Step budget: `floor(budget_factor * (input length + target length))`.
pub fn step_budget(instance: &TaskInstance, budget_factor: f64) -> usize {
    (budget_factor * (instance.input.len() + instance.target.len()) as f64).floor() as usize
}

/// Reward for an emitted prediction: log-probability of the desired symbol.
pub fn prediction_reward(pred: &Distribution, target: usize) -> f64 {
    pred.log_prob(target)
}

#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub argmax: usize,
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub input_pos: usize,
    /// Memory head position used for both the read and the write this step.
    pub mem_pos: usize,
    /// Output position before any emission this step.
    pub out_pos: usize,
    pub actions: ActionBundle,
    pub forced_output: bool,
    pub prediction: Option<PredictionRecord>,
    pub reward: f64,
    pub cache: StepCache,
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub instance: TaskInstance,
    pub steps: Vec<StepRecord>,
    pub total_reward: f64,
    pub budget: usize,
    pub mem_len: usize,
}

impl EpisodeTrace {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn actions(&self) -> Vec<ActionBundle> {
        self.steps.iter().map(|s| s.actions.clone()).collect()
    }

    /// Fraction of emitted predictions whose argmax misses the target.
    pub fn zero_one_loss(&self) -> f64 {
        let mut total = 0usize;
        let mut wrong = 0usize;
        for s in &self.steps {
            if let Some(p) = &s.prediction {
                total += 1;
                if p.argmax != p.target {
                    wrong += 1;
                }
            }
        }
        if total == 0 {
            return 0.0;
        }
        wrong as f64 / total as f64
    }
}

/// Incremental episode simulator. Cloneable so that the gradient checker can
/// branch the execution tree at every free decision.
#[derive(Clone)]
pub struct EpisodeSim<'a> {
    ctrl: &'a Controller,
    store: &'a ParameterStore,
    pub instance: &'a TaskInstance,
    pub state: ControllerState,
    pub input_pos: usize,
    pub memory: Vec<Vec<f64>>,
    pub mem_pos: usize,
    pub out_pos: usize,
    pub t: usize,
    pub budget: usize,
    prev: Option<ActionBundle>,
    pub total_reward: f64,
}

impl<'a> EpisodeSim<'a> {
    pub fn new(
        ctrl: &'a Controller,
        store: &'a ParameterStore,
        instance: &'a TaskInstance,
        budget_factor: f64,
    ) -> Result<Self> {
        if ctrl.config.mask != instance.mask {
            return Err(Error::DimensionMismatch(
                "controller mask does not match instance mask".into(),
            ));
        }
        let budget = step_budget(instance, budget_factor);
        if budget < instance.target.len() {
            return Err(Error::NumericFault(format!(
                "budget {budget} below target length {}",
                instance.target.len()
            )));
        }
        let mem_len = if instance.mask.memory { budget + 1 } else { 0 };
        Ok(EpisodeSim {
            ctrl,
            store,
            instance,
            state: ControllerState::zeros(ctrl.config.hidden),
            input_pos: 0,
            memory: vec![vec![0.0; ctrl.config.memory_dim]; mem_len],
            mem_pos: 0,
            out_pos: 0,
            t: 0,
            budget,
            prev: None,
            total_reward: 0.0,
        })
    }

    pub fn done(&self) -> bool {
        self.out_pos == self.instance.target.len()
    }

    pub fn remaining_steps(&self) -> usize {
        self.budget - self.t
    }

    pub fn remaining_targets(&self) -> usize {
        self.instance.target.len() - self.out_pos
    }

    /// The forcing rule: predict whenever the remaining desired outputs
    /// equal the remaining computational steps.
    pub fn forced(&self) -> bool {
        self.remaining_targets() == self.remaining_steps()
    }

    fn observe(&self) -> (Vec<f64>, usize, Vec<f64>) {
        let cfg = &self.ctrl.config;
        let half = cfg.window / 2;
        let ilen = self.instance.input.len();
        let input_window: Vec<Option<usize>> = (0..cfg.window)
            .map(|w| {
                let pos = self.input_pos as i64 + w as i64 - half as i64;
                if pos < 0 || pos >= ilen as i64 {
                    None
                } else {
                    Some(self.instance.input[pos as usize])
                }
            })
            .collect();
        let mut mem_window = Vec::new();
        let mut mem_cell = Vec::new();
        if cfg.mask.memory {
            mem_window.reserve(cfg.window * cfg.memory_dim);
            for w in 0..cfg.window {
                let pos = self.mem_pos as i64 + w as i64 - half as i64;
                if pos < 0 || pos >= self.memory.len() as i64 {
                    mem_window.extend(std::iter::repeat(0.0).take(cfg.memory_dim));
                } else {
                    mem_window.extend_from_slice(&self.memory[pos as usize]);
                }
            }
            mem_cell = self.memory[self.mem_pos].clone();
        }
        let x = self.ctrl.encode_obs(&input_window, &mem_window, self.prev.as_ref());
        let in_sym = self.instance.input[self.input_pos];
        (x, in_sym, mem_cell)
    }

    /// Run the controller on the current observation.
    pub fn compute(&self) -> Result<(ControllerState, StepOut)> {
        let (x, in_sym, mem_cell) = self.observe();
        self.ctrl.forward(self.store, &self.state, &x, in_sym, &mem_cell)
    }

    /// Commit one timestep with the given sampled/forced actions.
    pub fn apply(
        &mut self,
        new_state: ControllerState,
        out: StepOut,
        actions: ActionBundle,
        forced: bool,
    ) -> StepRecord {
        self.state = new_state;
        let cfg = &self.ctrl.config;
        let mut reward = 0.0;
        let mut prediction = None;
        let record_out_pos = self.out_pos;
        if actions.output == 1 {
            let target = self.instance.target[self.out_pos];
            reward = prediction_reward(&out.prediction, target);
            prediction = Some(PredictionRecord {
                argmax: out.prediction.argmax(),
                target,
            });
            self.out_pos += 1;
        }
        let record = StepRecord {
            t: self.t,
            input_pos: self.input_pos,
            mem_pos: self.mem_pos,
            out_pos: record_out_pos,
            actions: actions.clone(),
            forced_output: forced,
            prediction,
            reward,
            cache: out.cache,
        };
        if cfg.mask.memory {
            // write lands at the pre-move head position
            let w = out.memory_write.expect("memory write with memory mask");
            self.memory[self.mem_pos] = w;
            let delta = actions.memory.expect("memory action") as i64 - 1;
            self.mem_pos = move_head(self.mem_pos, delta, self.memory.len());
        }
        let in_delta = cfg.mask.input_deltas[actions.input.expect("input action")];
        self.input_pos = move_head(self.input_pos, in_delta, self.instance.input.len());
        self.total_reward += reward;
        self.prev = Some(actions);
        self.t += 1;
        record
    }
}

pub enum RunMode<'a> {
    Sample { seed: u64 },
    Greedy,
    Scripted(&'a [ActionBundle]),
}

/// Execute one full episode. The forcing rule guarantees termination with
/// exactly `target.len()` emissions within the step budget.
pub fn run_episode(
    ctrl: &Controller,
    store: &ParameterStore,
    instance: &TaskInstance,
    mode: RunMode,
    budget_factor: f64,
) -> Result<EpisodeTrace> {
    let mut sim = EpisodeSim::new(ctrl, store, instance, budget_factor)?;
    let mut rng = match &mode {
        RunMode::Sample { seed } => Some(StreamRng::new(*seed, "episode")),
        _ => None,
    };
    let mut scripted = match &mode {
        RunMode::Scripted(actions) => Some(actions.iter()),
        _ => None,
    };
    let mut steps = Vec::new();
    while !sim.done() {
        if sim.t >= sim.budget {
            return Err(Error::NumericFault(
                "episode exceeded its step budget".into(),
            ));
        }
        let (new_state, out) = sim.compute()?;
        let forced = sim.forced();
        let script_bundle = match scripted.as_mut() {
            Some(it) => Some(it.next().ok_or_else(|| {
                Error::ScriptedActions("action list shorter than the episode".into())
            })?),
            None => None,
        };
        let pick = |dist: &Distribution, scripted_choice: Option<usize>, rng: &mut Option<StreamRng>| {
            match (scripted_choice, rng) {
                (Some(c), _) => c,
                (None, Some(r)) => dist.sample(r),
                (None, None) => dist.argmax(),
            }
        };
        let input_choice = {
            let c = script_bundle.map(|b| {
                b.input
                    .ok_or_else(|| Error::ScriptedActions("missing input action".into()))
            });
            match c {
                Some(v) => Some(v?),
                None => None,
            }
        };
        if let Some(c) = input_choice {
            if c >= out.input_move.len() {
                return Err(Error::ScriptedActions(format!(
                    "input action {c} out of range"
                )));
            }
        }
        let input = pick(&out.input_move, input_choice, &mut rng);
        let memory = match &out.memory_move {
            Some(dist) => {
                let scripted_choice = match script_bundle {
                    Some(b) => Some(b.memory.ok_or_else(|| {
                        Error::ScriptedActions("missing memory action".into())
                    })?),
                    None => None,
                };
                Some(pick(dist, scripted_choice, &mut rng))
            }
            None => None,
        };
        let output = if forced {
            if let Some(b) = script_bundle {
                if b.output != 1 {
                    return Err(Error::ScriptedActions(format!(
                        "step {} is forced but script stays",
                        sim.t
                    )));
                }
            }
            1
        } else {
            pick(&out.output_move, script_bundle.map(|b| b.output), &mut rng)
        };
        let actions = ActionBundle {
            input: Some(input),
            memory,
            output,
        };
        steps.push(sim.apply(new_state, out, actions, forced));
    }
    if let Some(mut it) = scripted {
        if it.next().is_some() {
            return Err(Error::ScriptedActions(
                "action list longer than the episode".into(),
            ));
        }
    }
    Ok(EpisodeTrace {
        instance: instance.clone(),
        steps,
        total_reward: sim.total_reward,
        budget: sim.budget,
        mem_len: sim.memory.len(),
    })
}

/// Line-oriented execution trace: one row per timestep with head positions,
/// actions, the prediction (or `#`), the target and the reward. The memory
/// head is marked with `*`.
pub fn render_trace(trace: &EpisodeTrace, vocab: VocabSpec) -> String {
    let mut out = String::new();
    let syms = |s: &[usize]| {
        s.iter()
            .map(|&x| vocab.render(x))
            .collect::<Vec<_>>()
            .join(" ")
    };
    out.push_str(&format!("input:  {}\n", syms(&trace.instance.input)));
    out.push_str(&format!("target: {}\n", syms(&trace.instance.target)));
    out.push_str("t | in_head | mem_head | out_pos | action(in,mem,out) | predicted | target | reward\n");
    let deltas = &trace.instance.mask.input_deltas;
    for s in &trace.steps {
        let mem_head = if trace.instance.mask.memory {
            format!("*{}", s.mem_pos)
        } else {
            "-".to_string()
        };
        let in_delta = deltas[s.actions.input.unwrap()];
        let mem_delta = match s.actions.memory {
            Some(c) => format!("{:+}", c as i64 - 1),
            None => "-".to_string(),
        };
        let (pred, target) = match &s.prediction {
            Some(p) => (vocab.render(p.argmax), vocab.render(p.target)),
            None => ("#".to_string(), "#".to_string()),
        };
        out.push_str(&format!(
            "{} | {} | {} | {} | ({:+},{},{}) | {} | {} | {:.6}\n",
            s.t, s.input_pos, mem_head, s.out_pos, in_delta, mem_delta, s.actions.output, pred,
            target, s.reward
        ));
    }
    out.push_str(&format!("total_reward: {:.6}\n", trace.total_reward));
    out
}
