use rand::seq::index;
use rand::Rng;

use super::Transition;
use crate::error::{Error, Result};

/// Fixed-capacity ring buffer; pushing into a full buffer evicts the oldest entry.
#[derive(Clone, Debug)]
pub struct UniformReplay {
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl UniformReplay {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.cursor };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// `batch` distinct entries drawn uniformly without replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if self.storage.len() < batch {
            return Err(Error::InsufficientData {
                needed: batch,
                available: self.storage.len(),
            });
        }
        Ok(index::sample(rng, self.storage.len(), batch)
            .into_iter()
            .map(|i| self.storage[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, EnvState};
    use crate::RunRng;
    use rand::SeedableRng;

    fn tr(tag: f64) -> Transition {
        Transition {
            state: EnvState::new(tag, 0.0, 0.0, 0.0),
            action: Action::Left,
            reward: tag,
            next_state: EnvState::default(),
            done: false,
        }
    }

    #[test]
    fn ring_eviction_keeps_newest() {
        let mut buf = UniformReplay::new(2).unwrap();
        buf.push(tr(1.0));
        assert_eq!(buf.len(), 1);
        buf.push(tr(2.0));
        buf.push(tr(3.0));
        assert_eq!(buf.len(), 2);
        let rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
    }

    #[test]
    fn exhaustive_sample_returns_everything() {
        let mut buf = UniformReplay::new(10).unwrap();
        (0..5).for_each(|i| buf.push(tr(i as f64)));
        let mut rng = RunRng::seed_from_u64(1);
        let mut got: Vec<f64> = buf.sample(5, &mut rng).unwrap().iter().map(|t| t.reward).collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn undersized_buffer_reports_insufficient_data() {
        let mut buf = UniformReplay::new(10).unwrap();
        buf.push(tr(0.0));
        let mut rng = RunRng::seed_from_u64(1);
        assert!(matches!(
            buf.sample(2, &mut rng),
            Err(Error::InsufficientData { needed: 2, available: 1 })
        ));
    }

    #[test]
    fn single_draw_frequencies_are_uniform() {
        let mut buf = UniformReplay::new(10).unwrap();
        (0..10).for_each(|i| buf.push(tr(i as f64)));
        let mut rng = RunRng::seed_from_u64(42);
        let mut counts = [0usize; 10];
        let draws = 50_000;
        for _ in 0..draws {
            counts[buf.sample(1, &mut rng).unwrap()[0].reward as usize] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.1).abs() <= 0.01, "frequency {f}");
        }
    }

    #[test]
    fn zero_capacity_rejected() {
        assert!(UniformReplay::new(0).is_err());
    }
}
