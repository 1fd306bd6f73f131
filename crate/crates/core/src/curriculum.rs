//! Complexity scheduling: a three-branch sampling mixture over task
//! complexities, the 0.2-loss promotion rule, and the 100-update refractory
//! period between promotions.

use crate::rng::StreamRng;
use std::collections::VecDeque;

/// Which branch of the mixture produced a sample; exposed for the
/// distributional tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// 10%: uniform over all complexities.
    UniformAll,
    /// 25%: uniform over {1..c+e}.
    UniformUpTo,
    /// 65%: exactly c+e.
    AboveCurrent,
}

#[derive(Debug, Clone)]
pub struct CurriculumState {
    pub current: usize,
    pub max_complexity: usize,
    window_size: usize,
    window: VecDeque<f64>,
    pub updates_since_promotion: usize,
}

impl CurriculumState {
    pub fn new(max_complexity: usize, window_size: usize) -> Self {
        CurriculumState {
            current: 1,
            max_complexity: max_complexity.max(1),
            window_size: window_size.max(1),
            window: VecDeque::new(),
            updates_since_promotion: 0,
        }
    }

    pub fn loss_window_mean(&self) -> Option<f64> {
        if self.window.is_empty() {
            None
        } else {
            Some(self.window.iter().sum::<f64>() / self.window.len() as f64)
        }
    }

    /// Draw a complexity: 10% uniform over {1..max}; 25% uniform over
    /// {1..c+e}; 65% exactly c+e, with e geometric (p(k) = 2^-k, k >= 1);
    /// the result is clamped into [1, max].
    pub fn sample_complexity(&self, rng: &mut StreamRng) -> usize {
        self.sample_complexity_with_branch(rng).0
    }

    pub fn sample_complexity_with_branch(&self, rng: &mut StreamRng) -> (usize, Branch) {
        let u = rng.next_f64();
        let (d, branch) = if u < 0.10 {
            (1 + rng.next_below(self.max_complexity), Branch::UniformAll)
        } else if u < 0.35 {
            let e = rng.next_geometric_half() as usize;
            let hi = self.current + e;
            (1 + rng.next_below(hi), Branch::UniformUpTo)
        } else {
            let e = rng.next_geometric_half() as usize;
            (self.current + e, Branch::AboveCurrent)
        };
        (d.clamp(1, self.max_complexity), branch)
    }

    /// Record a batch of per-episode zero-one losses (one call per parameter
    /// update) and promote when the rolling mean drops below 0.2, provided
    /// at least 100 updates have passed since the last promotion. Returns
    /// whether a promotion happened.
    pub fn record_and_maybe_promote(&mut self, episode_losses: &[f64]) -> bool {
        for &loss in episode_losses {
            if self.window.len() == self.window_size {
                self.window.pop_front();
            }
            self.window.push_back(loss);
        }
        self.updates_since_promotion += 1;
        let mean = match self.loss_window_mean() {
            Some(m) => m,
            None => return false,
        };
        if mean < 0.2 && self.updates_since_promotion >= 100 && self.current < self.max_complexity
        {
            self.current += 1;
            self.updates_since_promotion = 0;
            self.window.clear();
            return true;
        }
        false
    }
}

/// Closed-form pmf of the sampled complexity at state `c`, computed by
/// direct summation over the geometric tail (e <= 60); index `d - 1`.
pub fn analytic_pmf(c: usize, max: usize) -> Vec<f64> {
    let mut pmf = vec![0.0; max];
    // branch 1
    for p in pmf.iter_mut() {
        *p += 0.10 / max as f64;
    }
    for e in 1..=60usize {
        let pe = 0.5f64.powi(e as i32);
        // branch 2: uniform over {1..c+e}, clamped into [1, max]
        let hi = c + e;
        for d in 1..=hi {
            pmf[d.min(max) - 1] += 0.25 * pe / hi as f64;
        }
        // branch 3: d = c + e, clamped
        pmf[(c + e).min(max) - 1] += 0.65 * pe;
    }
    pmf
}
