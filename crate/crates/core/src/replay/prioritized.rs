use rand::Rng;

use super::{SumTree, Transition};
use crate::error::{Error, Result};

/// Prioritization constants. `b` anneals toward `b_max` by `b_increment` per sample call.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerParams {
    pub e: f64,
    pub a: f64,
    pub b: f64,
    pub b_increment: f64,
    pub b_max: f64,
}

impl Default for PerParams {
    fn default() -> Self {
        Self {
            e: 0.01,
            a: 0.6,
            b: 0.0,
            b_increment: 0.001,
            b_max: 1.0,
        }
    }
}

impl PerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0 && self.e.is_finite()) {
            return Err(Error::InvalidConfig(format!("PER e must be > 0, got {}", self.e)));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::InvalidConfig(format!("PER a must be in [0, 1], got {}", self.a)));
        }
        if !(0.0..=1.0).contains(&self.b) || !(0.0..=1.0).contains(&self.b_max) {
            return Err(Error::InvalidConfig(format!("PER b must be in [0, 1], got {}", self.b)));
        }
        if self.b_increment.is_nan() || self.b_increment < 0.0 {
            return Err(Error::InvalidConfig("PER b increment must be >= 0".into()));
        }
        Ok(())
    }

    /// `(|δ| + e)^a`, the leaf value stored for a TD error.
    pub fn priority(&self, td_error: f64) -> f64 {
        (td_error.abs() + self.e).powf(self.a)
    }
}

/// One prioritized sample: transitions, their leaves, and max-normalized IS weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PerBatch {
    pub transitions: Vec<Transition>,
    pub leaves: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PrioritizedReplay {
    tree: SumTree<Transition>,
    params: PerParams,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, params: PerParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            tree: SumTree::new(capacity)?,
            params,
        })
    }

    pub fn params(&self) -> &PerParams {
        &self.params
    }

    pub fn tree(&self) -> &SumTree<Transition> {
        &self.tree
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.tree.capacity()
    }

    pub fn push(&mut self, t: Transition, td_error: f64) -> Result<usize> {
        self.tree.add(self.params.priority(td_error), t)
    }

    /// Stratified draw: the total mass is cut into `batch` equal segments and
    /// one point is drawn uniformly inside each.
    pub fn sample<R: Rng + ?Sized>(&mut self, batch: usize, rng: &mut R) -> Result<PerBatch> {
        let n = self.tree.len();
        if n < batch || batch == 0 {
            return Err(Error::InsufficientData {
                needed: batch.max(1),
                available: n,
            });
        }
        let total = self.tree.total();
        let segment = total / batch as f64;
        let b = self.params.b;

        let mut transitions = Vec::with_capacity(batch);
        let mut leaves = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch);
        for i in 0..batch {
            let low = segment * i as f64;
            let high = segment * (i + 1) as f64;
            let s = if high > low { rng.gen_range(low..high) } else { low };
            let (leaf, priority, t) = self.tree.get(s.min(total))?;
            let probability = priority / total;
            transitions.push(*t);
            leaves.push(leaf);
            weights.push((n as f64 * probability).powf(-b));
        }
        let max_weight = weights.iter().copied().fold(0.0, f64::max);
        if max_weight > 0.0 && max_weight.is_finite() {
            weights.iter_mut().for_each(|w| *w /= max_weight);
        }

        self.params.b = (b + self.params.b_increment).min(self.params.b_max);
        Ok(PerBatch {
            transitions,
            leaves,
            weights,
        })
    }

    pub fn update_priorities(&mut self, leaves: &[usize], td_errors: &[f64]) -> Result<()> {
        if leaves.len() != td_errors.len() {
            return Err(Error::DimensionMismatch {
                expected: leaves.len(),
                actual: td_errors.len(),
            });
        }
        for (&leaf, &delta) in leaves.iter().zip(td_errors) {
            self.tree.update(leaf, self.params.priority(delta))?;
        }
        Ok(())
    }
}

/// Unnormalized importance-sampling weight `(N · P(i))^(-b)`.
pub fn importance_weight(n: usize, probability: f64, b: f64) -> f64 {
    (n as f64 * probability).powf(-b)
}
