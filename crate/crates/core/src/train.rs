//! The training loop: curriculum-driven batch sampling, Reinforce gradient
//! assembly, per-group gradient clipping, and SGD with momentum.

use crate::controller::{Controller, ControllerConfig, ControllerKind};
use crate::curriculum::CurriculumState;
use crate::engine::{run_episode, EpisodeTrace, RunMode};
use crate::error::Result;
use crate::numerics::ParameterStore;
use crate::reinforce::{accumulate_batch, BaselineMode, BaselineNetwork};
use crate::rng::StreamRng;
use crate::tasks::{generate, interface_mask, Task, VocabSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub controller: ControllerKind,
    pub lr: f64,
    pub momentum: f64,
    pub batch: usize,
    pub clip_controller: f64,
    pub clip_baseline: f64,
    pub init_std: f64,
    pub beta: f64,
    pub hidden: usize,
    pub memory_dim: usize,
    pub budget_factor: f64,
    pub window: usize,
    /// Number of payload symbols in the vocabulary (terminator excluded).
    pub payload: usize,
    pub max_complexity: usize,
    pub max_updates: usize,
    pub baseline_mode: BaselineMode,
    pub baseline_hidden: usize,
    pub seed: u64,
    /// When false, every episode uses max_complexity (ablation mode).
    pub curriculum: bool,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub loss_window: usize,
    /// Record wall-clock times in the log (off by default so that logs are
    /// byte-identical across reruns).
    pub timings: bool,
}

impl TrainConfig {
    pub fn new(task: Task, controller: ControllerKind) -> Self {
        TrainConfig {
            task,
            controller,
            lr: 0.05,
            momentum: 0.9,
            batch: 200,
            clip_controller: 5.0,
            clip_baseline: 2.0,
            init_std: 0.1,
            beta: 0.01,
            hidden: 64,
            memory_dim: 35,
            budget_factor: 2.0,
            window: 1,
            payload: 30,
            max_complexity: 11,
            max_updates: 20_000,
            baseline_mode: BaselineMode::Offline,
            baseline_hidden: 64,
            seed: 1,
            curriculum: true,
            eval_every: 100,
            eval_episodes: 50,
            loss_window: 200,
            timings: false,
        }
    }

    pub fn vocab(&self) -> VocabSpec {
        VocabSpec::new(self.payload)
    }

    pub fn controller_config(&self) -> ControllerConfig {
        ControllerConfig {
            kind: self.controller,
            hidden: self.hidden,
            window: self.window,
            memory_dim: self.memory_dim,
            vocab: self.vocab(),
            mask: interface_mask(self.task),
            beta: self.beta,
        }
    }

    /// Parameter spec: controller tensors plus the offline baseline group
    /// when that mode is selected.
    pub fn param_spec(&self) -> Vec<(String, Vec<usize>)> {
        let config = self.controller_config();
        let mut spec = Controller::param_spec(&config);
        if self.baseline_mode == BaselineMode::Offline {
            let x_dim = Controller::x_dim_of(&config);
            spec.extend(BaselineNetwork::param_spec(self.baseline_hidden, x_dim));
        }
        spec
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainRecord {
    pub update: usize,
    pub complexity: usize,
    pub mean_zero_one: f64,
    pub mean_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_loss: Option<f64>,
    pub grad_norm_controller: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm_baseline: Option<f64>,
    pub promoted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_current: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_max: Option<f64>,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub updates: usize,
    /// Stopping rule satisfied: three consecutive perfect greedy
    /// evaluations at max complexity.
    pub solved: bool,
    /// First update at which a greedy evaluation at max complexity reached
    /// zero loss.
    pub first_perfect_eval: Option<usize>,
    pub final_eval_max: Option<f64>,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub store: ParameterStore,
    pub ctrl: Controller,
    pub baseline: Option<BaselineNetwork>,
    pub curriculum: CurriculumState,
    pub update: usize,
    consecutive_perfect: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Trainer> {
        let spec = config.param_spec();
        let store = ParameterStore::gaussian_init(&spec, config.init_std, config.seed)?;
        Self::with_store(config, store)
    }

    /// Resume from an existing parameter store (e.g. a checkpoint).
    pub fn with_store(config: TrainConfig, store: ParameterStore) -> Result<Trainer> {
        let ctrl = Controller::bind(config.controller_config(), &store)?;
        let baseline = if config.baseline_mode == BaselineMode::Offline {
            Some(BaselineNetwork::bind(
                config.baseline_hidden,
                ctrl.x_dim(),
                &store,
            )?)
        } else {
            None
        };
        let curriculum = CurriculumState::new(config.max_complexity, config.loss_window);
        Ok(Trainer {
            config,
            store,
            ctrl,
            baseline,
            curriculum,
            update: 0,
            consecutive_perfect: 0,
        })
    }

    fn effective_complexity(&self, sampled: usize) -> usize {
        sampled
            .max(self.config.task.min_complexity())
            .min(self.config.max_complexity)
    }

    /// One parameter update over a freshly sampled batch.
    pub fn step(&mut self) -> Result<TrainRecord> {
        let cfg = &self.config;
        let start = std::time::Instant::now();
        let mut rng = StreamRng::substream(cfg.seed, "train/update", self.update as u64);
        let mut traces: Vec<EpisodeTrace> = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let sampled = if cfg.curriculum {
                self.curriculum.sample_complexity(&mut rng)
            } else {
                cfg.max_complexity
            };
            let complexity = self.effective_complexity(sampled);
            let instance = generate(cfg.task, complexity, rng.next_u64(), cfg.vocab())?;
            traces.push(run_episode(
                &self.ctrl,
                &self.store,
                &instance,
                RunMode::Sample {
                    seed: rng.next_u64(),
                },
                cfg.budget_factor,
            )?);
        }
        let mut grads = self.store.zero_like();
        let stats = accumulate_batch(
            &self.ctrl,
            &self.store,
            &traces,
            cfg.baseline_mode,
            self.baseline.as_ref(),
            &mut grads,
        )?;
        self.store.accumulate_grads(&grads);
        let grad_norm_controller = self.store.clip_grad_norm("ctrl/", cfg.clip_controller);
        let grad_norm_baseline = (cfg.baseline_mode == BaselineMode::Offline)
            .then(|| self.store.clip_grad_norm("base/", cfg.clip_baseline));
        self.store.sgd_momentum_step(cfg.lr, cfg.momentum)?;
        let losses: Vec<f64> = traces.iter().map(|t| t.zero_one_loss()).collect();
        let promoted = if cfg.curriculum {
            self.curriculum.record_and_maybe_promote(&losses)
        } else {
            false
        };
        self.update += 1;
        Ok(TrainRecord {
            update: self.update,
            complexity: self.curriculum.current,
            mean_zero_one: stats.mean_zero_one,
            mean_reward: stats.mean_reward,
            baseline_loss: stats.baseline_loss,
            grad_norm_controller,
            grad_norm_baseline,
            promoted,
            eval_current: None,
            eval_max: None,
            wall_ms: if cfg.timings {
                start.elapsed().as_millis()
            } else {
                0
            },
        })
    }

    /// Mean greedy zero-one loss over freshly generated instances.
    pub fn evaluate(&self, complexity: usize, episodes: usize) -> Result<f64> {
        let cfg = &self.config;
        let complexity = complexity.max(cfg.task.min_complexity());
        let mut rng = StreamRng::substream(cfg.seed, "eval", self.update as u64);
        let mut total = 0.0;
        for _ in 0..episodes {
            let instance = generate(cfg.task, complexity, rng.next_u64(), cfg.vocab())?;
            let trace = run_episode(
                &self.ctrl,
                &self.store,
                &instance,
                RunMode::Greedy,
                cfg.budget_factor,
            )?;
            total += trace.zero_one_loss();
        }
        Ok(total / episodes as f64)
    }

    /// Full run: steps until max_updates or three consecutive perfect
    /// greedy evaluations at max complexity.
    pub fn run(&mut self, mut on_record: impl FnMut(&TrainRecord)) -> Result<TrainOutcome> {
        let mut first_perfect = None;
        let mut final_eval = None;
        while self.update < self.config.max_updates {
            let mut record = self.step()?;
            if self.update % self.config.eval_every == 0 {
                let eval_current =
                    self.evaluate(self.curriculum.current, self.config.eval_episodes)?;
                let eval_max =
                    self.evaluate(self.config.max_complexity, self.config.eval_episodes)?;
                record.eval_current = Some(eval_current);
                record.eval_max = Some(eval_max);
                final_eval = Some(eval_max);
                if eval_max == 0.0 {
                    first_perfect.get_or_insert(self.update);
                    self.consecutive_perfect += 1;
                } else {
                    self.consecutive_perfect = 0;
                }
            }
            on_record(&record);
            if self.consecutive_perfect >= 3 {
                return Ok(TrainOutcome {
                    updates: self.update,
                    solved: true,
                    first_perfect_eval: first_perfect,
                    final_eval_max: final_eval,
                });
            }
        }
        Ok(TrainOutcome {
            updates: self.update,
            solved: false,
            first_perfect_eval: first_perfect,
            final_eval_max: final_eval,
        })
    }
}
