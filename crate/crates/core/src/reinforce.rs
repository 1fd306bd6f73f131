//! Episodic Reinforce with the three variance-reduction techniques:
//! future returns (causality), an online batch baseline, and an offline
//! baseline LSTM trained alongside the controller.

use crate::controller::{lstm_backward, lstm_forward, Controller, LstmCache, LstmIds, StepUpstream};
use crate::engine::EpisodeTrace;
use crate::error::{Error, Result};
use crate::numerics::{ParameterStore, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMode {
    None,
    Online,
    Offline,
}

/// Future returns: `R(t) = sum of rewards from t to the end`.
pub fn future_returns(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc += r;
        *o = acc;
    }
    out
}

/// Online baseline: `b_t` is the batch mean of the future returns at
/// timestep `t`, over the episodes that are still running at `t`.
pub fn online_baselines(futures: &[Vec<f64>]) -> Vec<f64> {
    let max_len = futures.iter().map(|f| f.len()).max().unwrap_or(0);
    let mut out = vec![0.0; max_len];
    for (t, o) in out.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut n = 0usize;
        for f in futures {
            if t < f.len() {
                sum += f[t];
                n += 1;
            }
        }
        if n > 0 {
            *o = sum / n as f64;
        }
    }
    out
}

/// Per-step Reinforce weights for one episode. `weights[t]` multiplies the
/// log-probability of every action sampled at step `t`; the forced output
/// action gets weight zero because no decision was made there. `sign` is +1
/// for a gradient of the objective and -1 for a gradient of the loss.
pub fn upstream_for_trace(trace: &EpisodeTrace, weights: &[f64], sign: f64) -> Vec<StepUpstream> {
    trace
        .steps
        .iter()
        .zip(weights)
        .map(|(step, &w)| StepUpstream {
            pred_target: step.prediction.as_ref().map(|p| p.target),
            pred_weight: if step.prediction.is_some() { sign } else { 0.0 },
            input_weight: sign * w,
            memory_weight: if step.actions.memory.is_some() {
                sign * w
            } else {
                0.0
            },
            output_weight: if step.forced_output { 0.0 } else { sign * w },
        })
        .collect()
}

// ---------------------------------------------------------------------------
// offline baseline network
// ---------------------------------------------------------------------------

/// A separate LSTM that predicts the future return at every step. It first
/// consumes the whole input tape one symbol per step, then runs in tandem
/// with the controller on the controller's own observations, emitting one
/// scalar `b_t` per step. Trained on the squared error against the future
/// returns; its parameters form their own gradient-clipping group.
pub struct BaselineNetwork {
    pub hidden: usize,
    pub x_dim: usize,
    lstm: LstmIds,
    out_w: usize,
    out_b: usize,
}

pub struct BaselineCache {
    phase1: Vec<LstmCache>,
    phase2: Vec<LstmCache>,
}

impl BaselineNetwork {
    pub fn param_spec(hidden: usize, x_dim: usize) -> Vec<(String, Vec<usize>)> {
        vec![
            ("base/lstm/wx".to_string(), vec![4 * hidden, x_dim]),
            ("base/lstm/wh".to_string(), vec![4 * hidden, hidden]),
            ("base/lstm/b".to_string(), vec![4 * hidden]),
            ("base/out/w".to_string(), vec![1, hidden]),
            ("base/out/b".to_string(), vec![1]),
        ]
    }

    pub fn bind(hidden: usize, x_dim: usize, store: &ParameterStore) -> Result<BaselineNetwork> {
        let id = |name: &str| -> Result<usize> {
            store
                .id(name)
                .ok_or_else(|| Error::DimensionMismatch(format!("missing parameter `{name}`")))
        };
        Ok(BaselineNetwork {
            hidden,
            x_dim,
            lstm: LstmIds {
                wx: id("base/lstm/wx")?,
                wh: id("base/lstm/wh")?,
                b: id("base/lstm/b")?,
            },
            out_w: id("base/out/w")?,
            out_b: id("base/out/b")?,
        })
    }

    /// Phase 1 over the input tape, phase 2 over the recorded controller
    /// observations. Returns one baseline value per episode step.
    pub fn forward(
        &self,
        store: &ParameterStore,
        ctrl: &Controller,
        trace: &EpisodeTrace,
    ) -> Result<(Vec<f64>, BaselineCache)> {
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut phase1 = Vec::with_capacity(trace.instance.input.len());
        for &sym in &trace.instance.input {
            let x = ctrl.encode_symbol_only(sym);
            let cache = lstm_forward(store, self.lstm, &x, &h, &c)?;
            h = cache.h_new.clone();
            c = cache.c_new.clone();
            phase1.push(cache);
        }
        let w = store.value(self.out_w);
        let b0 = store.value(self.out_b).data[0];
        let mut values = Vec::with_capacity(trace.steps.len());
        let mut phase2 = Vec::with_capacity(trace.steps.len());
        for step in &trace.steps {
            let cache = lstm_forward(store, self.lstm, step.cache.x(), &h, &c)?;
            h = cache.h_new.clone();
            c = cache.c_new.clone();
            let mut v = b0;
            for (wk, hk) in w.data.iter().zip(&h) {
                v += wk * hk;
            }
            values.push(v);
            phase2.push(cache);
        }
        Ok((values, BaselineCache { phase1, phase2 }))
    }

    /// Backpropagate `d_values[t] = dL/db_t` through both phases.
    pub fn backward(
        &self,
        store: &ParameterStore,
        cache: &BaselineCache,
        d_values: &[f64],
        grads: &mut [Tensor],
    ) {
        let mut dh = vec![0.0; self.hidden];
        let mut dc = vec![0.0; self.hidden];
        let w = store.value(self.out_w);
        for (step_cache, &dv) in cache.phase2.iter().zip(d_values).rev() {
            for k in 0..self.hidden {
                grads[self.out_w].data[k] += dv * step_cache.h_new[k];
                dh[k] += dv * w.data[k];
            }
            grads[self.out_b].data[0] += dv;
            let (dh_prev, dc_prev, _dx) = lstm_backward(store, self.lstm, step_cache, &dh, &dc, grads);
            dh = dh_prev;
            dc = dc_prev;
        }
        for step_cache in cache.phase1.iter().rev() {
            let (dh_prev, dc_prev, _dx) = lstm_backward(store, self.lstm, step_cache, &dh, &dc, grads);
            dh = dh_prev;
            dc = dc_prev;
        }
    }

    /// Squared-error loss against the future returns; accumulates its
    /// gradient and returns the loss value.
    pub fn accumulate_loss_grad(
        &self,
        store: &ParameterStore,
        cache: &BaselineCache,
        values: &[f64],
        returns: &[f64],
        grads: &mut [Tensor],
    ) -> f64 {
        let mut loss = 0.0;
        let d_values: Vec<f64> = values
            .iter()
            .zip(returns)
            .map(|(&b, &r)| {
                loss += (b - r) * (b - r);
                2.0 * (b - r)
            })
            .collect();
        self.backward(store, cache, &d_values, grads);
        loss
    }
}

// ---------------------------------------------------------------------------
// batch assembly
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean_reward: f64,
    pub mean_zero_one: f64,
    pub baseline_loss: Option<f64>,
}

/// Accumulate the loss gradient (negative objective gradient) for a batch of
/// sampled episodes into `grads`, normalized by the batch size. With the
/// offline baseline, the squared-error gradient for the `base/*` parameters
/// is accumulated into the same buffers.
pub fn accumulate_batch(
    ctrl: &Controller,
    store: &ParameterStore,
    traces: &[EpisodeTrace],
    mode: BaselineMode,
    baseline: Option<&BaselineNetwork>,
    grads: &mut [Tensor],
) -> Result<BatchStats> {
    if traces.is_empty() {
        return Err(Error::DimensionMismatch("empty batch".into()));
    }
    if mode == BaselineMode::Offline && baseline.is_none() {
        return Err(Error::DimensionMismatch(
            "offline baseline mode without a baseline network".into(),
        ));
    }
    let futures: Vec<Vec<f64>> = traces.iter().map(|t| future_returns(&t.rewards())).collect();
    let online = if mode == BaselineMode::Online {
        online_baselines(&futures)
    } else {
        Vec::new()
    };
    let inv_b = 1.0 / traces.len() as f64;
    let mut baseline_loss = 0.0;
    let mut mean_reward = 0.0;
    let mut mean_zero_one = 0.0;
    for (trace, future) in traces.iter().zip(&futures) {
        let baselines: Vec<f64> = match mode {
            BaselineMode::None => vec![0.0; future.len()],
            BaselineMode::Online => future.iter().enumerate().map(|(t, _)| online[t]).collect(),
            BaselineMode::Offline => {
                let net = baseline.unwrap();
                let (values, cache) = net.forward(store, ctrl, trace)?;
                let mut d_values = vec![0.0; values.len()];
                for (t, (&b, &r)) in values.iter().zip(future).enumerate() {
                    d_values[t] = 2.0 * inv_b * (b - r);
                    baseline_loss += inv_b * (b - r) * (b - r);
                }
                net.backward(store, &cache, &d_values, grads);
                values
            }
        };
        let weights: Vec<f64> = future
            .iter()
            .zip(&baselines)
            .map(|(&r, &b)| r - b)
            .collect();
        let upstream = upstream_for_trace(trace, &weights, -inv_b);
        ctrl.backward_episode(store, trace, &upstream, grads)?;
        mean_reward += inv_b * trace.total_reward;
        mean_zero_one += inv_b * trace.zero_one_loss();
    }
    Ok(BatchStats {
        mean_reward,
        mean_zero_one,
        baseline_loss: (mode == BaselineMode::Offline).then_some(baseline_loss),
    })
}
