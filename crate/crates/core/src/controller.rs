//! The trainable controller: an LSTM core, the per-interface action heads,
//! the prediction head, and the direct-access variant that adds sigmoid-gated
//! copy paths from the input and memory straight into the prediction logits
//! and the memory write.
//!
//! Gradients are hand-derived; `backward_episode` runs backpropagation
//! through time over a recorded episode, including the gradient flow through
//! memory writes that are read back at later steps.

use serde::{Deserialize, Serialize};

use crate::engine::EpisodeTrace;
use crate::error::{Error, Result};
use crate::numerics::{softmax_with_inv_temp, Distribution, ParameterStore, Tensor};
use crate::tasks::{InterfaceMask, VocabSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Lstm,
    DirectAccess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub hidden: usize,
    /// Odd number of cells read around each head position.
    pub window: usize,
    pub memory_dim: usize,
    pub vocab: VocabSpec,
    pub mask: InterfaceMask,
    /// Inverse temperature applied to the action heads (not the prediction).
    pub beta: f64,
}

impl ControllerConfig {
    pub fn input_options(&self) -> usize {
        self.mask.input_deltas.len()
    }
}

/// Recurrent state; zeros at episode start.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl ControllerState {
    pub fn zeros(hidden: usize) -> Self {
        ControllerState {
            hidden: vec![0.0; hidden],
            cell: vec![0.0; hidden],
        }
    }
}

/// One timestep's discrete choices, stored as option indices into each
/// head's support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionBundle {
    pub input: Option<usize>,
    pub memory: Option<usize>,
    /// 0 = stay, 1 = emit and advance.
    pub output: usize,
}

// ---------------------------------------------------------------------------
// small dense helpers
// ---------------------------------------------------------------------------

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// y = W x + b for a [rows, cols] matrix.
fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let rows = w.shape[0];
    let cols = w.shape[1];
    debug_assert_eq!(cols, x.len());
    let mut y = b.data.clone();
    for r in 0..rows {
        let row = &w.data[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        y[r] += acc;
    }
    y
}

/// gw += dy ⊗ x
fn grad_outer(gw: &mut Tensor, dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, d) in dy.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        let row = &mut gw.data[r * cols..(r + 1) * cols];
        for (g, xv) in row.iter_mut().zip(x) {
            *g += d * xv;
        }
    }
}

/// dx += W^T dy
fn grad_through(w: &Tensor, dy: &[f64], dx: &mut [f64]) {
    let cols = w.shape[1];
    for (r, d) in dy.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        let row = &w.data[r * cols..(r + 1) * cols];
        for (g, wv) in dx.iter_mut().zip(row) {
            *g += d * wv;
        }
    }
}

fn add_scaled(dst: &mut [f64], src: &[f64], s: f64) {
    for (d, v) in dst.iter_mut().zip(src) {
        *d += s * v;
    }
}

// ---------------------------------------------------------------------------
// LSTM cell (shared with the baseline network)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmIds {
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    pub c_new: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h_new: Vec<f64>,
}

/// Standard LSTM cell: i,f,o = sigmoid(affine), g = tanh(affine),
/// c' = f*c + i*g, h' = o*tanh(c'). Gate order in the stacked 4H dimension
/// is i, f, g, o.
pub(crate) fn lstm_forward(
    store: &ParameterStore,
    ids: LstmIds,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<LstmCache> {
    let wx = store.value(ids.wx);
    let wh = store.value(ids.wh);
    let b = store.value(ids.b);
    let hsz = h_prev.len();
    if wx.shape[1] != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "lstm input dim {} vs expected {}",
            x.len(),
            wx.shape[1]
        )));
    }
    let mut z = affine(wx, b, x);
    // z += Wh h_prev
    let cols = wh.shape[1];
    for r in 0..wh.shape[0] {
        let row = &wh.data[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, hv) in row.iter().zip(h_prev) {
            acc += wv * hv;
        }
        z[r] += acc;
    }
    let mut i = vec![0.0; hsz];
    let mut f = vec![0.0; hsz];
    let mut g = vec![0.0; hsz];
    let mut o = vec![0.0; hsz];
    for k in 0..hsz {
        i[k] = sigmoid(z[k]);
        f[k] = sigmoid(z[hsz + k]);
        g[k] = z[2 * hsz + k].tanh();
        o[k] = sigmoid(z[3 * hsz + k]);
    }
    let mut c_new = vec![0.0; hsz];
    let mut tanh_c = vec![0.0; hsz];
    let mut h_new = vec![0.0; hsz];
    for k in 0..hsz {
        c_new[k] = f[k] * c_prev[k] + i[k] * g[k];
        tanh_c[k] = c_new[k].tanh();
        h_new[k] = o[k] * tanh_c[k];
    }
    Ok(LstmCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        c_new,
        tanh_c,
        h_new,
    })
}

/// Backward through one LSTM step. `dh`/`dc` are gradients w.r.t. h_new and
/// c_new; returns gradients w.r.t. (h_prev, c_prev, x).
pub(crate) fn lstm_backward(
    store: &ParameterStore,
    ids: LstmIds,
    cache: &LstmCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut [Tensor],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hsz = dh.len();
    let mut dz = vec![0.0; 4 * hsz];
    let mut dc_prev = vec![0.0; hsz];
    for k in 0..hsz {
        let do_ = dh[k] * cache.tanh_c[k];
        let dct = dc[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
        let di = dct * cache.g[k];
        let df = dct * cache.c_prev[k];
        let dg = dct * cache.i[k];
        dc_prev[k] = dct * cache.f[k];
        dz[k] = di * cache.i[k] * (1.0 - cache.i[k]);
        dz[hsz + k] = df * cache.f[k] * (1.0 - cache.f[k]);
        dz[2 * hsz + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
        dz[3 * hsz + k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
    }
    grad_outer(&mut grads[ids.wx], &dz, &cache.x);
    grad_outer(&mut grads[ids.wh], &dz, &cache.h_prev);
    for (gb, d) in grads[ids.b].data.iter_mut().zip(&dz) {
        *gb += d;
    }
    let mut dx = vec![0.0; cache.x.len()];
    grad_through(store.value(ids.wx), &dz, &mut dx);
    let mut dh_prev = vec![0.0; hsz];
    grad_through(store.value(ids.wh), &dz, &mut dh_prev);
    (dh_prev, dc_prev, dx)
}

// ---------------------------------------------------------------------------
// controller
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct HeadIds {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct GateIds {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct DirectAccessIds {
    gate_in_pred: GateIds,
    kappa: usize,
    gate_mem_pred: Option<GateIds>,
    k2: Option<usize>,
    gate_in_write: Option<GateIds>,
    e: Option<usize>,
    gate_mem_write: Option<GateIds>,
}

#[derive(Debug, Clone)]
struct ParamIds {
    lstm: LstmIds,
    head_input: HeadIds,
    head_memory: Option<HeadIds>,
    head_output: HeadIds,
    head_pred: HeadIds,
    head_write: Option<HeadIds>,
    da: Option<DirectAccessIds>,
}

#[derive(Debug, Clone)]
pub struct Controller {
    pub config: ControllerConfig,
    ids: ParamIds,
}

/// Everything the controller emits at one timestep.
#[derive(Debug, Clone)]
pub struct StepOut {
    pub input_move: Distribution,
    pub memory_move: Option<Distribution>,
    pub output_move: Distribution,
    pub prediction: Distribution,
    pub memory_write: Option<Vec<f64>>,
    pub cache: StepCache,
}

#[derive(Debug, Clone)]
struct DaCache {
    s_in_pred: f64,
    s_mem_pred: f64,
    s_in_write: f64,
    s_mem_write: f64,
}

/// Saved activations for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    lstm: LstmCache,
    input_probs: Vec<f64>,
    mem_probs: Option<Vec<f64>>,
    out_probs: Vec<f64>,
    pred_probs: Vec<f64>,
    write_tanh: Option<Vec<f64>>,
    da: Option<DaCache>,
    in_sym: usize,
    mem_cell: Vec<f64>,
}

impl StepCache {
    pub fn x(&self) -> &[f64] {
        &self.lstm.x
    }

    fn floored_ln(p: f64) -> f64 {
        p.max(crate::numerics::PROB_FLOOR).ln()
    }

    pub fn log_prob_input(&self, choice: usize) -> f64 {
        Self::floored_ln(self.input_probs[choice])
    }

    pub fn log_prob_memory(&self, choice: usize) -> f64 {
        Self::floored_ln(self.mem_probs.as_ref().expect("memory head")[choice])
    }

    pub fn log_prob_output(&self, choice: usize) -> f64 {
        Self::floored_ln(self.out_probs[choice])
    }
}

/// Per-step weights for the backward pass. A weight of zero removes the
/// corresponding term from the objective.
#[derive(Debug, Clone, Default)]
pub struct StepUpstream {
    /// Target class for an emitted prediction, with its weight on
    /// log p(target).
    pub pred_target: Option<usize>,
    pub pred_weight: f64,
    /// Weights on log p(chosen action) per discrete head.
    pub input_weight: f64,
    pub memory_weight: f64,
    pub output_weight: f64,
}

impl Controller {
    /// Parameter names and shapes for this configuration, in a fixed order.
    pub fn param_spec(config: &ControllerConfig) -> Vec<(String, Vec<usize>)> {
        let h = config.hidden;
        let x = Self::x_dim_for(config);
        let v_out = config.vocab.output_dim();
        let v_in = config.vocab.input_dim();
        let m = config.memory_dim;
        let k_in = config.input_options();
        let mut spec = vec![
            ("ctrl/lstm/wx".to_string(), vec![4 * h, x]),
            ("ctrl/lstm/wh".to_string(), vec![4 * h, h]),
            ("ctrl/lstm/b".to_string(), vec![4 * h]),
            ("ctrl/head/input/w".to_string(), vec![k_in, h]),
            ("ctrl/head/input/b".to_string(), vec![k_in]),
            ("ctrl/head/output/w".to_string(), vec![2, h]),
            ("ctrl/head/output/b".to_string(), vec![2]),
            ("ctrl/head/pred/w".to_string(), vec![v_out, h]),
            ("ctrl/head/pred/b".to_string(), vec![v_out]),
        ];
        if config.mask.memory {
            spec.push(("ctrl/head/memory/w".to_string(), vec![3, h]));
            spec.push(("ctrl/head/memory/b".to_string(), vec![3]));
            spec.push(("ctrl/head/write/w".to_string(), vec![m, h]));
            spec.push(("ctrl/head/write/b".to_string(), vec![m]));
        }
        if config.kind == ControllerKind::DirectAccess {
            spec.push(("ctrl/da/gate_in_pred/w".to_string(), vec![1, h]));
            spec.push(("ctrl/da/gate_in_pred/b".to_string(), vec![1]));
            spec.push(("ctrl/da/kappa".to_string(), vec![1]));
            if config.mask.memory {
                spec.push(("ctrl/da/gate_mem_pred/w".to_string(), vec![1, h]));
                spec.push(("ctrl/da/gate_mem_pred/b".to_string(), vec![1]));
                spec.push(("ctrl/da/k2".to_string(), vec![v_out, m]));
                spec.push(("ctrl/da/gate_in_write/w".to_string(), vec![1, h]));
                spec.push(("ctrl/da/gate_in_write/b".to_string(), vec![1]));
                spec.push(("ctrl/da/e".to_string(), vec![m, v_in]));
                spec.push(("ctrl/da/gate_mem_write/w".to_string(), vec![1, h]));
                spec.push(("ctrl/da/gate_mem_write/b".to_string(), vec![1]));
            }
        }
        spec
    }

    /// Bind a controller to a store that already holds its parameters.
    pub fn bind(config: ControllerConfig, store: &ParameterStore) -> Result<Controller> {
        let id = |name: &str| -> Result<usize> {
            store
                .id(name)
                .ok_or_else(|| Error::DimensionMismatch(format!("missing parameter `{name}`")))
        };
        let head = |name: &str| -> Result<HeadIds> {
            Ok(HeadIds {
                w: id(&format!("{name}/w"))?,
                b: id(&format!("{name}/b"))?,
            })
        };
        let gate = |name: &str| -> Result<GateIds> {
            Ok(GateIds {
                w: id(&format!("{name}/w"))?,
                b: id(&format!("{name}/b"))?,
            })
        };
        let da = if config.kind == ControllerKind::DirectAccess {
            Some(DirectAccessIds {
                gate_in_pred: gate("ctrl/da/gate_in_pred")?,
                kappa: id("ctrl/da/kappa")?,
                gate_mem_pred: if config.mask.memory {
                    Some(gate("ctrl/da/gate_mem_pred")?)
                } else {
                    None
                },
                k2: if config.mask.memory {
                    Some(id("ctrl/da/k2")?)
                } else {
                    None
                },
                gate_in_write: if config.mask.memory {
                    Some(gate("ctrl/da/gate_in_write")?)
                } else {
                    None
                },
                e: if config.mask.memory {
                    Some(id("ctrl/da/e")?)
                } else {
                    None
                },
                gate_mem_write: if config.mask.memory {
                    Some(gate("ctrl/da/gate_mem_write")?)
                } else {
                    None
                },
            })
        } else {
            None
        };
        let ids = ParamIds {
            lstm: LstmIds {
                wx: id("ctrl/lstm/wx")?,
                wh: id("ctrl/lstm/wh")?,
                b: id("ctrl/lstm/b")?,
            },
            head_input: head("ctrl/head/input")?,
            head_memory: if config.mask.memory {
                Some(head("ctrl/head/memory")?)
            } else {
                None
            },
            head_output: head("ctrl/head/output")?,
            head_pred: head("ctrl/head/pred")?,
            head_write: if config.mask.memory {
                Some(head("ctrl/head/write")?)
            } else {
                None
            },
            da,
        };
        Ok(Controller { config, ids })
    }

    pub fn x_dim_of(config: &ControllerConfig) -> usize {
        Self::x_dim_for(config)
    }

    fn x_dim_for(config: &ControllerConfig) -> usize {
        let mut d = config.window * config.vocab.input_dim();
        if config.mask.memory {
            d += config.window * config.memory_dim;
        }
        // previous-action one-hots, each head with an extra "none" slot
        d += config.input_options() + 1;
        if config.mask.memory {
            d += 3 + 1;
        }
        d += 2 + 1;
        d
    }

    pub fn x_dim(&self) -> usize {
        Self::x_dim_for(&self.config)
    }

    fn mem_window_offset(&self) -> usize {
        self.config.window * self.config.vocab.input_dim()
    }

    /// Byte offset of the memory window inside the observation vector; the
    /// window spans `window * memory_dim` entries from here.
    pub fn mem_window_range(&self) -> Option<std::ops::Range<usize>> {
        if self.config.mask.memory {
            let start = self.mem_window_offset();
            Some(start..start + self.config.window * self.config.memory_dim)
        } else {
            None
        }
    }

    /// Build the observation vector from the tape windows and the previous
    /// step's actions. `input_window` holds one symbol per window cell
    /// (None = beyond the tape edge); `mem_window` is empty when the memory
    /// interface is off.
    pub fn encode_obs(
        &self,
        input_window: &[Option<usize>],
        mem_window: &[f64],
        prev: Option<&ActionBundle>,
    ) -> Vec<f64> {
        let cfg = &self.config;
        debug_assert_eq!(input_window.len(), cfg.window);
        let mut x = vec![0.0; self.x_dim()];
        let v_in = cfg.vocab.input_dim();
        for (w, sym) in input_window.iter().enumerate() {
            if let Some(s) = sym {
                x[w * v_in + s] = 1.0;
            }
        }
        let mut off = self.mem_window_offset();
        if cfg.mask.memory {
            debug_assert_eq!(mem_window.len(), cfg.window * cfg.memory_dim);
            x[off..off + mem_window.len()].copy_from_slice(mem_window);
            off += cfg.window * cfg.memory_dim;
        }
        // previous actions: input head
        let k_in = cfg.input_options();
        match prev {
            Some(a) => x[off + a.input.expect("input action")] = 1.0,
            None => x[off + k_in] = 1.0,
        }
        off += k_in + 1;
        if cfg.mask.memory {
            match prev {
                Some(a) => x[off + a.memory.expect("memory action")] = 1.0,
                None => x[off + 3] = 1.0,
            }
            off += 4;
        }
        match prev {
            Some(a) => x[off + a.output] = 1.0,
            None => x[off + 2] = 1.0,
        }
        x
    }

    /// Observation containing only one input symbol, used by the baseline
    /// network's preliminary pass over the input tape.
    pub fn encode_symbol_only(&self, sym: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.x_dim()];
        let center = self.config.window / 2;
        x[center * self.config.vocab.input_dim() + sym] = 1.0;
        x
    }

    /// One forward step. `in_sym` is the symbol under the input head and
    /// `mem_cell` the memory cell under the memory head (empty without the
    /// memory interface).
    pub fn forward(
        &self,
        store: &ParameterStore,
        state: &ControllerState,
        x: &[f64],
        in_sym: usize,
        mem_cell: &[f64],
    ) -> Result<(ControllerState, StepOut)> {
        let cfg = &self.config;
        let lstm = lstm_forward(store, self.ids.lstm, x, &state.hidden, &state.cell)?;
        let h = &lstm.h_new;

        let head = |ids: HeadIds| affine(store.value(ids.w), store.value(ids.b), h);
        let input_logits = head(self.ids.head_input);
        let input_move = softmax_with_inv_temp(&input_logits, cfg.beta)?;
        let memory_move = match self.ids.head_memory {
            Some(ids) => Some(softmax_with_inv_temp(&head(ids), cfg.beta)?),
            None => None,
        };
        let output_move = softmax_with_inv_temp(&head(self.ids.head_output), cfg.beta)?;

        let mut pred_logits = head(self.ids.head_pred);
        let mut write_tanh = None;
        let mut write_final = None;
        if let Some(ids) = self.ids.head_write {
            let wt: Vec<f64> = head(ids).into_iter().map(f64::tanh).collect();
            write_final = Some(wt.clone());
            write_tanh = Some(wt);
        }

        let da = match &self.ids.da {
            Some(da_ids) => {
                let gate = |g: GateIds| {
                    sigmoid(affine(store.value(g.w), store.value(g.b), h)[0])
                };
                let s_in_pred = gate(da_ids.gate_in_pred);
                let kappa = store.value(da_ids.kappa).data[0];
                if in_sym < cfg.vocab.output_dim() {
                    pred_logits[in_sym] += s_in_pred * kappa;
                }
                let mut s_mem_pred = 0.0;
                let mut s_in_write = 0.0;
                let mut s_mem_write = 0.0;
                if cfg.mask.memory {
                    s_mem_pred = gate(da_ids.gate_mem_pred.unwrap());
                    let k2 = store.value(da_ids.k2.unwrap());
                    let m = cfg.memory_dim;
                    for (r, logit) in pred_logits.iter_mut().enumerate() {
                        let row = &k2.data[r * m..(r + 1) * m];
                        let mut acc = 0.0;
                        for (kv, mv) in row.iter().zip(mem_cell) {
                            acc += kv * mv;
                        }
                        *logit += s_mem_pred * acc;
                    }
                    s_in_write = gate(da_ids.gate_in_write.unwrap());
                    s_mem_write = gate(da_ids.gate_mem_write.unwrap());
                    let e = store.value(da_ids.e.unwrap());
                    let v_in = cfg.vocab.input_dim();
                    let w = write_final.as_mut().unwrap();
                    for (r, wv) in w.iter_mut().enumerate() {
                        *wv += s_in_write * e.data[r * v_in + in_sym] + s_mem_write * mem_cell[r];
                    }
                }
                Some(DaCache {
                    s_in_pred,
                    s_mem_pred,
                    s_in_write,
                    s_mem_write,
                })
            }
            None => None,
        };

        let prediction = softmax_with_inv_temp(&pred_logits, 1.0)?;

        let cache = StepCache {
            input_probs: input_move.probs().to_vec(),
            mem_probs: memory_move.as_ref().map(|d| d.probs().to_vec()),
            out_probs: output_move.probs().to_vec(),
            pred_probs: prediction.probs().to_vec(),
            write_tanh,
            da,
            in_sym,
            mem_cell: mem_cell.to_vec(),
            lstm,
        };
        let new_state = ControllerState {
            hidden: cache.lstm.h_new.clone(),
            cell: cache.lstm.c_new.clone(),
        };
        Ok((
            new_state,
            StepOut {
                input_move,
                memory_move,
                output_move,
                prediction,
                memory_write: write_final,
                cache,
            },
        ))
    }

    /// Backward through one step. `dh`/`dc` carry gradients w.r.t. this
    /// step's (h, c) coming from the future; on return they hold gradients
    /// w.r.t. the previous step's state. `dwrite` is the gradient w.r.t. the
    /// memory vector written this step. Returns (dx, d mem_cell).
    #[allow(clippy::too_many_arguments)]
    fn backward_step(
        &self,
        store: &ParameterStore,
        cache: &StepCache,
        actions: &ActionBundle,
        up: &StepUpstream,
        dwrite: Option<Vec<f64>>,
        dh: &mut Vec<f64>,
        dc: &mut Vec<f64>,
        grads: &mut [Tensor],
    ) -> (Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let beta = cfg.beta;
        let h = &cache.lstm.h_new;
        let mut dmem_cell = vec![0.0; cache.mem_cell.len()];

        // weight * d log p(a) / d logits for an inverse-temperature softmax
        let head_back = |ids: HeadIds,
                         probs: &[f64],
                         action: usize,
                         weight: f64,
                         b: f64,
                         dh: &mut Vec<f64>,
                         grads: &mut [Tensor]| {
            if weight == 0.0 {
                return;
            }
            let mut dlogits = vec![0.0; probs.len()];
            for (j, p) in probs.iter().enumerate() {
                let ind = if j == action { 1.0 } else { 0.0 };
                dlogits[j] = weight * b * (ind - p);
            }
            grad_outer(&mut grads[ids.w], &dlogits, h);
            for (gb, d) in grads[ids.b].data.iter_mut().zip(&dlogits) {
                *gb += d;
            }
            grad_through(store.value(ids.w), &dlogits, dh);
        };

        if let Some(a) = actions.input {
            head_back(
                self.ids.head_input,
                &cache.input_probs,
                a,
                up.input_weight,
                beta,
                dh,
                grads,
            );
        }
        if let (Some(ids), Some(probs), Some(a)) =
            (self.ids.head_memory, cache.mem_probs.as_ref(), actions.memory)
        {
            head_back(ids, probs, a, up.memory_weight, beta, dh, grads);
        }
        head_back(
            self.ids.head_output,
            &cache.out_probs,
            actions.output,
            up.output_weight,
            beta,
            dh,
            grads,
        );

        // prediction head (beta = 1) plus direct-access read paths
        if let (Some(target), w) = (up.pred_target, up.pred_weight) {
            if w != 0.0 {
                let mut dlogits = vec![0.0; cache.pred_probs.len()];
                for (j, p) in cache.pred_probs.iter().enumerate() {
                    let ind = if j == target { 1.0 } else { 0.0 };
                    dlogits[j] = w * (ind - p);
                }
                grad_outer(&mut grads[self.ids.head_pred.w], &dlogits, h);
                for (gb, d) in grads[self.ids.head_pred.b].data.iter_mut().zip(&dlogits) {
                    *gb += d;
                }
                grad_through(store.value(self.ids.head_pred.w), &dlogits, dh);

                if let (Some(da_ids), Some(da)) = (&self.ids.da, &cache.da) {
                    if cache.in_sym < cfg.vocab.output_dim() {
                        let kappa = store.value(da_ids.kappa).data[0];
                        let d = dlogits[cache.in_sym];
                        grads[da_ids.kappa].data[0] += da.s_in_pred * d;
                        let ds = kappa * d;
                        self.gate_backward(store, da_ids.gate_in_pred, da.s_in_pred, ds, h, dh, grads);
                    }
                    if let (Some(k2_id), Some(g_mem)) = (da_ids.k2, da_ids.gate_mem_pred) {
                        let m = cfg.memory_dim;
                        let mut ds = 0.0;
                        for (r, d) in dlogits.iter().enumerate() {
                            if *d == 0.0 {
                                continue;
                            }
                            let row_start = r * m;
                            let mut acc = 0.0;
                            for k in 0..m {
                                let kv = store.value(k2_id).data[row_start + k];
                                acc += kv * cache.mem_cell[k];
                                grads[k2_id].data[row_start + k] +=
                                    da.s_mem_pred * d * cache.mem_cell[k];
                                dmem_cell[k] += da.s_mem_pred * d * kv;
                            }
                            ds += d * acc;
                        }
                        self.gate_backward(store, g_mem, da.s_mem_pred, ds, h, dh, grads);
                    }
                }
            }
        }

        // memory write path
        if let Some(dw) = dwrite {
            if dw.iter().any(|v| *v != 0.0) {
                if let (Some(da_ids), Some(da)) = (&self.ids.da, &cache.da) {
                    if let (Some(e_id), Some(g_in), Some(g_mem)) =
                        (da_ids.e, da_ids.gate_in_write, da_ids.gate_mem_write)
                    {
                        let v_in = cfg.vocab.input_dim();
                        let e = store.value(e_id);
                        let mut ds_in = 0.0;
                        let mut ds_mem = 0.0;
                        for (r, d) in dw.iter().enumerate() {
                            ds_in += d * e.data[r * v_in + cache.in_sym];
                            ds_mem += d * cache.mem_cell[r];
                            grads[e_id].data[r * v_in + cache.in_sym] += da.s_in_write * d;
                            dmem_cell[r] += da.s_mem_write * d;
                        }
                        self.gate_backward(store, g_in, da.s_in_write, ds_in, h, dh, grads);
                        self.gate_backward(store, g_mem, da.s_mem_write, ds_mem, h, dh, grads);
                    }
                }
                if let (Some(ids), Some(wt)) = (self.ids.head_write, cache.write_tanh.as_ref()) {
                    let dpre: Vec<f64> = dw
                        .iter()
                        .zip(wt)
                        .map(|(d, t)| d * (1.0 - t * t))
                        .collect();
                    grad_outer(&mut grads[ids.w], &dpre, h);
                    for (gb, d) in grads[ids.b].data.iter_mut().zip(&dpre) {
                        *gb += d;
                    }
                    grad_through(store.value(ids.w), &dpre, dh);
                }
            }
        }

        let (dh_prev, dc_prev, dx) =
            lstm_backward(store, self.ids.lstm, &cache.lstm, dh, dc, grads);
        *dh = dh_prev;
        *dc = dc_prev;
        (dx, dmem_cell)
    }

    #[allow(clippy::too_many_arguments)]
    fn gate_backward(
        &self,
        store: &ParameterStore,
        gate: GateIds,
        s: f64,
        ds: f64,
        h: &[f64],
        dh: &mut [f64],
        grads: &mut [Tensor],
    ) {
        if ds == 0.0 {
            return;
        }
        let dz = ds * s * (1.0 - s);
        let w = store.value(gate.w);
        for (k, hv) in h.iter().enumerate() {
            grads[gate.w].data[k] += dz * hv;
            dh[k] += dz * w.data[k];
        }
        grads[gate.b].data[0] += dz;
    }

    /// Backpropagation through time over a recorded episode. Accumulates
    /// into `grads` (additive; buffers are not zeroed). The per-step
    /// objective is
    /// `pred_weight * log p(pred=target) + sum_head weight * log p(action)`,
    /// with gradient flow through memory writes read back at later steps.
    pub fn backward_episode(
        &self,
        store: &ParameterStore,
        trace: &EpisodeTrace,
        upstream: &[StepUpstream],
        grads: &mut [Tensor],
    ) -> Result<()> {
        if upstream.len() != trace.steps.len() {
            return Err(Error::DimensionMismatch(format!(
                "upstream len {} vs trace len {}",
                upstream.len(),
                trace.steps.len()
            )));
        }
        let cfg = &self.config;
        let hsz = cfg.hidden;
        let m = cfg.memory_dim;
        let mut dh = vec![0.0; hsz];
        let mut dc = vec![0.0; hsz];
        let mut dmem: Vec<Vec<f64>> = if cfg.mask.memory {
            vec![vec![0.0; m]; trace.mem_len]
        } else {
            Vec::new()
        };
        let half = cfg.window / 2;
        for (step, up) in trace.steps.iter().zip(upstream).rev() {
            let dwrite = if cfg.mask.memory {
                let dw = std::mem::replace(&mut dmem[step.mem_pos], vec![0.0; m]);
                Some(dw)
            } else {
                None
            };
            let (dx, dmem_cell) = self.backward_step(
                store,
                &step.cache,
                &step.actions,
                up,
                dwrite,
                &mut dh,
                &mut dc,
                grads,
            );
            if cfg.mask.memory {
                // direct-access reads of the cell under the head
                add_scaled(&mut dmem[step.mem_pos], &dmem_cell, 1.0);
                // memory-window observation
                let off = self.mem_window_offset();
                for w in 0..cfg.window {
                    let pos = step.mem_pos as i64 + w as i64 - half as i64;
                    if pos < 0 || pos >= trace.mem_len as i64 {
                        continue;
                    }
                    let slice = &dx[off + w * m..off + (w + 1) * m];
                    add_scaled(&mut dmem[pos as usize], slice, 1.0);
                }
            }
        }
        Ok(())
    }
}
