//! Dense tensors, parameter storage, SGD with momentum, softmax and
//! finite-difference utilities. Everything is `f64`; models here are small
//! enough that verification tolerance matters more than speed.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Row-major dense tensor of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A probability distribution over a finite set of outcomes.
///
/// Entries are strictly positive and sum to one within 1e-9. Probabilities
/// that would underflow to zero are floored at a tiny positive value so that
/// log-probabilities stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

pub(crate) const PROB_FLOOR: f64 = 1e-300;

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyLogits);
        }
        let sum: f64 = probs.iter().sum();
        if !(sum - 1.0).abs().is_finite() || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NumericFault(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
        let probs = probs
            .into_iter()
            .map(|p| if p < PROB_FLOOR { PROB_FLOOR } else { p })
            .collect();
        Ok(Distribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn log_prob(&self, i: usize) -> f64 {
        self.probs[i].ln()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn sample(&self, rng: &mut StreamRng) -> usize {
        let u = rng.next_f64();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Softmax of `beta * logits`, stabilized by max subtraction.
pub fn softmax_with_inv_temp(logits: &[f64], beta: f64) -> Result<Distribution> {
    if logits.is_empty() {
        return Err(Error::EmptyLogits);
    }
    debug_assert!(beta > 0.0);
    let scaled: Vec<f64> = logits.iter().map(|l| beta * l).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NumericFault("non-finite logits in softmax".into()));
    }
    let exps: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Distribution::new(exps.into_iter().map(|e| e / sum).collect())
}

/// One named parameter tensor with its gradient and momentum buffers.
#[derive(Debug, Clone)]
struct Entry {
    value: Tensor,
    grad: Tensor,
    momentum: Tensor,
}

/// Flat collection of named parameter tensors.
///
/// Iteration order is the insertion order of `from_spec`, which callers keep
/// deterministic; lookups by name go through a sorted index.
#[derive(Debug, Clone)]
pub struct ParameterStore {
    names: Vec<String>,
    entries: Vec<Entry>,
    index: BTreeMap<String, usize>,
}

impl ParameterStore {
    pub fn from_spec(spec: &[(String, Vec<usize>)]) -> Self {
        let mut names = Vec::with_capacity(spec.len());
        let mut entries = Vec::with_capacity(spec.len());
        let mut index = BTreeMap::new();
        for (name, shape) in spec {
            index.insert(name.clone(), names.len());
            names.push(name.clone());
            entries.push(Entry {
                value: Tensor::zeros(shape),
                grad: Tensor::zeros(shape),
                momentum: Tensor::zeros(shape),
            });
        }
        ParameterStore {
            names,
            entries,
            index,
        }
    }

    /// Fill every tensor i.i.d. Normal(0, std^2) from a stream keyed by
    /// `(seed, name)`; gradient and momentum buffers stay zero.
    pub fn gaussian_init(spec: &[(String, Vec<usize>)], std: f64, seed: u64) -> Result<Self> {
        if std <= 0.0 {
            return Err(Error::NonPositiveStd(std));
        }
        let mut store = Self::from_spec(spec);
        for i in 0..store.entries.len() {
            let mut rng = StreamRng::new(seed, &format!("init/{}", store.names[i]));
            for v in store.entries[i].value.data.iter_mut() {
                *v = std * rng.next_normal();
            }
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn value(&self, id: usize) -> &Tensor {
        &self.entries[id].value
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.entries[id].value
    }

    pub fn grad(&self, id: usize) -> &Tensor {
        &self.entries[id].grad
    }

    pub fn grad_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.entries[id].grad
    }

    pub fn momentum(&self, id: usize) -> &Tensor {
        &self.entries[id].momentum
    }

    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<usize> {
        (0..self.names.len())
            .filter(|&i| self.names[i].starts_with(prefix))
            .collect()
    }

    /// Fresh zero buffers matching every parameter shape, in parameter order.
    pub fn zero_like(&self) -> Vec<Tensor> {
        self.entries
            .iter()
            .map(|e| Tensor::zeros(&e.value.shape))
            .collect()
    }

    /// Add an external gradient buffer set into the stored gradients.
    pub fn accumulate_grads(&mut self, buffers: &[Tensor]) {
        assert_eq!(buffers.len(), self.entries.len());
        for (e, b) in self.entries.iter_mut().zip(buffers) {
            for (g, v) in e.grad.data.iter_mut().zip(&b.data) {
                *g += v;
            }
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for e in self.entries.iter_mut() {
            for g in e.grad.data.iter_mut() {
                *g *= factor;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.iter_mut() {
            e.grad.data.fill(0.0);
        }
    }

    /// Global L2 norm of the gradients whose names match `prefix`.
    pub fn grad_norm(&self, prefix: &str) -> f64 {
        let mut sq = 0.0;
        for i in self.ids_with_prefix(prefix) {
            sq += self.entries[i].grad.data.iter().map(|g| g * g).sum::<f64>();
        }
        sq.sqrt()
    }

    /// Clip the gradients of one parameter group to a global-norm limit.
    /// Returns the pre-clip norm.
    pub fn clip_grad_norm(&mut self, prefix: &str, max_norm: f64) -> f64 {
        debug_assert!(max_norm > 0.0);
        let norm = self.grad_norm(prefix);
        if norm > max_norm {
            let scale = max_norm / norm;
            for i in self.ids_with_prefix(prefix) {
                for g in self.entries[i].grad.data.iter_mut() {
                    *g *= scale;
                }
            }
        }
        norm
    }

    /// Heavy-ball update: v <- momentum * v + g; theta <- theta - lr * v.
    /// Gradients are zeroed afterwards.
    pub fn sgd_momentum_step(&mut self, lr: f64, momentum: f64) -> Result<()> {
        for i in 0..self.entries.len() {
            if !self.entries[i].grad.all_finite() {
                return Err(Error::NonFiniteGradient(self.names[i].clone()));
            }
        }
        for i in 0..self.entries.len() {
            let e = &mut self.entries[i];
            for j in 0..e.value.data.len() {
                e.momentum.data[j] = momentum * e.momentum.data[j] + e.grad.data[j];
                e.value.data[j] -= lr * e.momentum.data[j];
            }
            e.grad.data.fill(0.0);
            if !e.value.all_finite() {
                return Err(Error::NonFiniteValue(self.names[i].clone()));
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.value.all_finite())
    }
}

/// Clip a free-standing set of tensors to a global-norm limit.
pub fn clip_global_norm(tensors: &mut [Tensor], max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let sq: f64 = tensors
        .iter()
        .flat_map(|t| t.data.iter())
        .map(|g| g * g)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in tensors.iter_mut() {
            for g in t.data.iter_mut() {
                *g *= scale;
            }
        }
    }
    norm
}

/// Central-difference gradient of a deterministic objective. The store is
/// restored exactly before returning.
pub fn finite_difference_grad<F>(
    store: &mut ParameterStore,
    epsilon: f64,
    mut objective: F,
) -> Result<Vec<Tensor>>
where
    F: FnMut(&ParameterStore) -> f64,
{
    debug_assert!(epsilon > 0.0);
    let mut grads = store.zero_like();
    for id in 0..store.len() {
        for j in 0..store.value(id).len() {
            let orig = store.value(id).data[j];
            store.value_mut(id).data[j] = orig + epsilon;
            let fp = objective(store);
            store.value_mut(id).data[j] = orig - epsilon;
            let fm = objective(store);
            store.value_mut(id).data[j] = orig;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFiniteObjective);
            }
            grads[id].data[j] = (fp - fm) / (2.0 * epsilon);
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_spec() -> Vec<(String, Vec<usize>)> {
        vec![("theta".to_string(), vec![1])]
    }

    #[test]
    fn gaussian_init_is_deterministic() {
        let spec = vec![("w".to_string(), vec![2, 2])];
        let a = ParameterStore::gaussian_init(&spec, 0.1, 7).unwrap();
        let b = ParameterStore::gaussian_init(&spec, 0.1, 7).unwrap();
        assert_eq!(a.value(0).data, b.value(0).data);
        let c = ParameterStore::gaussian_init(&spec, 0.1, 8).unwrap();
        assert_ne!(a.value(0).data, c.value(0).data);
    }

    #[test]
    fn gaussian_init_sample_std() {
        let spec = vec![("w".to_string(), vec![100_000])];
        let s = ParameterStore::gaussian_init(&spec, 0.1, 3).unwrap();
        let data = &s.value(0).data;
        let mean: f64 = data.iter().sum::<f64>() / data.len() as f64;
        let var: f64 =
            data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / data.len() as f64;
        let std = var.sqrt();
        assert!((0.09..=0.11).contains(&std), "sample std {std}");
    }

    #[test]
    fn gaussian_init_rejects_nonpositive_std() {
        let spec = scalar_spec();
        assert!(matches!(
            ParameterStore::gaussian_init(&spec, 0.0, 1),
            Err(Error::NonPositiveStd(_))
        ));
    }

    #[test]
    fn sgd_momentum_single_step() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        s.value_mut(0).data[0] = 1.0;
        s.grad_mut(0).data[0] = 0.2;
        s.sgd_momentum_step(0.05, 0.9).unwrap();
        assert!((s.momentum(0).data[0] - 0.2).abs() < 1e-15);
        assert!((s.value(0).data[0] - 0.99).abs() < 1e-15);
        assert_eq!(s.grad(0).data[0], 0.0);
    }

    #[test]
    fn sgd_zero_gradient_leaves_params() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        s.value_mut(0).data[0] = 0.7;
        s.sgd_momentum_step(0.05, 0.9).unwrap();
        assert_eq!(s.value(0).data[0], 0.7);
    }

    #[test]
    fn sgd_two_steps_accumulate_momentum() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        s.grad_mut(0).data[0] = 1.0;
        s.sgd_momentum_step(0.05, 0.9).unwrap();
        s.grad_mut(0).data[0] = 1.0;
        s.sgd_momentum_step(0.05, 0.9).unwrap();
        assert!((s.value(0).data[0] - (-0.145)).abs() < 1e-12);
    }

    #[test]
    fn sgd_without_momentum_is_plain_descent() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        s.value_mut(0).data[0] = 2.0;
        s.grad_mut(0).data[0] = 0.5;
        s.sgd_momentum_step(0.1, 0.0).unwrap();
        assert_eq!(s.value(0).data[0], 2.0 - 0.1 * 0.5);
    }

    #[test]
    fn sgd_rejects_nonfinite_gradient() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        s.grad_mut(0).data[0] = f64::NAN;
        match s.sgd_momentum_step(0.05, 0.9) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "theta"),
            other => panic!("expected NonFiniteGradient, got {other:?}"),
        }
    }

    #[test]
    fn clip_scales_down_over_limit() {
        let mut t = vec![Tensor {
            shape: vec![2],
            data: vec![6.0, 8.0],
        }];
        let norm = clip_global_norm(&mut t, 5.0);
        assert!((norm - 10.0).abs() < 1e-12);
        assert!((t[0].data[0] - 3.0).abs() < 1e-12);
        assert!((t[0].data[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn clip_leaves_under_limit() {
        let mut t = vec![Tensor {
            shape: vec![2],
            data: vec![3.0, 0.0],
        }];
        clip_global_norm(&mut t, 5.0);
        assert_eq!(t[0].data, vec![3.0, 0.0]);
    }

    #[test]
    fn clip_is_idempotent() {
        let mut a = vec![Tensor {
            shape: vec![2],
            data: vec![6.0, 8.0],
        }];
        clip_global_norm(&mut a, 5.0);
        let once = a[0].data.clone();
        clip_global_norm(&mut a, 5.0);
        assert_eq!(a[0].data, once);
    }

    #[test]
    fn clip_never_increases_norm() {
        let mut rng = StreamRng::new(11, "clipprop");
        for _ in 0..200 {
            let n = 1 + rng.next_below(8);
            let data: Vec<f64> = (0..n).map(|_| 10.0 * rng.next_normal()).collect();
            let mut t = vec![Tensor {
                shape: vec![n],
                data,
            }];
            let max = 0.1 + 5.0 * rng.next_f64();
            clip_global_norm(&mut t, max);
            let norm: f64 = t[0].data.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= max + 1e-12);
        }
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let d = softmax_with_inv_temp(&[0.0, 0.0, 0.0], 0.37).unwrap();
        for p in d.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_closed_form_two_way() {
        let d = softmax_with_inv_temp(&[100.0, 0.0], 0.01).unwrap();
        let e = std::f64::consts::E;
        assert!((d.prob(0) - e / (1.0 + e)).abs() < 1e-12);
        assert!((d.prob(1) - 1.0 / (1.0 + e)).abs() < 1e-12);
    }

    #[test]
    fn softmax_extreme_logits_do_not_overflow() {
        let d = softmax_with_inv_temp(&[1e6, 0.0], 1.0).unwrap();
        assert!((d.prob(0) - 1.0).abs() < 1e-12);
        assert!(d.prob(1) > 0.0); // floored, never exactly zero
        assert!(d.log_prob(1).is_finite());
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(matches!(
            softmax_with_inv_temp(&[], 1.0),
            Err(Error::EmptyLogits)
        ));
    }

    #[test]
    fn distribution_sums_to_one() {
        let mut rng = StreamRng::new(5, "softprop");
        for _ in 0..500 {
            let n = 1 + rng.next_below(6);
            let logits: Vec<f64> = (0..n).map(|_| 20.0 * rng.next_normal()).collect();
            let beta = 0.01 + rng.next_f64();
            let d = softmax_with_inv_temp(&logits, beta).unwrap();
            let sum: f64 = d.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(d.probs().iter().all(|p| *p > 0.0));
        }
    }

    #[test]
    fn finite_difference_quadratic() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        s.value_mut(0).data[0] = 3.0;
        let g = finite_difference_grad(&mut s, 1e-5, |st| st.value(0).data[0].powi(2)).unwrap();
        assert!((g[0].data[0] - 6.0).abs() < 1e-8);
        assert_eq!(s.value(0).data[0], 3.0); // restored exactly
    }

    #[test]
    fn finite_difference_constant_is_zero() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        let g = finite_difference_grad(&mut s, 1e-5, |_| 42.0).unwrap();
        assert_eq!(g[0].data[0], 0.0);
    }

    #[test]
    fn finite_difference_sine_at_zero() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        let g = finite_difference_grad(&mut s, 1e-5, |st| st.value(0).data[0].sin()).unwrap();
        assert!((g[0].data[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn finite_difference_rejects_nonfinite_objective() {
        let mut s = ParameterStore::from_spec(&scalar_spec());
        assert!(matches!(
            finite_difference_grad(&mut s, 1e-5, |_| f64::NAN),
            Err(Error::NonFiniteObjective)
        ));
    }
}
