//! Tabular Q-learning over a bucketized cart-pole state.

use rand::Rng;

use crate::env::{Action, EnvParams, EnvState};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BucketSpec {
    pub dims: [usize; 4],
    pub bounds: [(f64, f64); 4],
}

impl BucketSpec {
    pub fn new(dims: [usize; 4], bounds: [(f64, f64); 4]) -> Result<Self> {
        let spec = Self { dims, bounds };
        spec.validate()?;
        Ok(spec)
    }

    /// `(1, 1, 6, 3)` buckets. Velocity ranges are fixed at ±0.5 and ±50°/s.
    pub fn cartpole(env: &EnvParams) -> Self {
        Self {
            dims: [1, 1, 6, 3],
            bounds: [
                (-env.x_threshold, env.x_threshold),
                (-0.5, 0.5),
                (-env.theta_threshold, env.theta_threshold),
                (-50f64.to_radians(), 50f64.to_radians()),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, (&n, &(low, high))) in self.dims.iter().zip(&self.bounds).enumerate() {
            if n == 0 {
                return Err(Error::InvalidConfig(format!("bucket count {k} must be >= 1")));
            }
            if !(low.is_finite() && high.is_finite() && low < high) {
                return Err(Error::InvalidConfig(format!(
                    "bucket bounds {k} must satisfy low < high, got ({low}, {high})"
                )));
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        self.dims.iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DiscreteState(pub [usize; 4]);

pub fn bucketize(state: &EnvState, spec: &BucketSpec) -> DiscreteState {
    let values = state.to_array();
    let mut indices = [0usize; 4];
    for k in 0..4 {
        let n = spec.dims[k];
        if n == 1 {
            continue;
        }
        let (low, high) = spec.bounds[k];
        let v = values[k].clamp(low, high);
        let scaled = ((v - low) / (high - low) * n as f64).floor();
        // NaN clamps to the lowest bucket via the saturating cast
        indices[k] = (scaled.max(0.0) as usize).min(n - 1);
    }
    DiscreteState(indices)
}

/// Dense action-value table indexed by `DiscreteState × action`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    dims: [usize; 4],
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(dims: [usize; 4], actions: usize) -> Self {
        let len = dims.iter().product::<usize>() * actions;
        Self {
            dims,
            actions,
            values: vec![0.0; len],
        }
    }

    pub fn from_values(dims: [usize; 4], actions: usize, values: Vec<f64>) -> Result<Self> {
        let expected = dims.iter().product::<usize>() * actions;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        Ok(Self {
            dims,
            actions,
            values,
        })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    /// Row-major values, action index varying fastest.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, ds: &DiscreteState) -> usize {
        let mut flat = 0;
        for k in 0..4 {
            debug_assert!(ds.0[k] < self.dims[k], "state index out of range");
            flat = flat * self.dims[k] + ds.0[k];
        }
        flat * self.actions
    }

    pub fn row(&self, ds: &DiscreteState) -> &[f64] {
        let start = self.offset(ds);
        &self.values[start..start + self.actions]
    }

    pub fn row_mut(&mut self, ds: &DiscreteState) -> &mut [f64] {
        let start = self.offset(ds);
        &mut self.values[start..start + self.actions]
    }

    pub fn greedy_action(&self, ds: &DiscreteState) -> Action {
        Action::from_index(argmax(self.row(ds))).expect("two-action table")
    }

    /// One Q-learning update of `table[ds][a]` toward `r + gamma * max table[ds_next]`.
    /// Returns the new entry value.
    pub fn q_update(
        &mut self,
        ds: &DiscreteState,
        action: Action,
        reward: f64,
        ds_next: &DiscreteState,
        alpha: f64,
        gamma: f64,
    ) -> f64 {
        let best_next = max(self.row(ds_next));
        let entry = &mut self.row_mut(ds)[action.index()];
        *entry += alpha * (reward + gamma * best_next - *entry);
        *entry
    }

    /// Update toward `reward` alone, used when the next state is terminal.
    pub fn q_update_terminal(
        &mut self,
        ds: &DiscreteState,
        action: Action,
        reward: f64,
        alpha: f64,
    ) -> f64 {
        let entry = &mut self.row_mut(ds)[action.index()];
        *entry += alpha * (reward - *entry);
        *entry
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn select_action<R: Rng + ?Sized>(
    table: &QTable,
    ds: &DiscreteState,
    epsilon: f64,
    rng: &mut R,
) -> Action {
    if rng.gen::<f64>() < epsilon {
        Action::random(rng)
    } else {
        table.greedy_action(ds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayKind {
    LogDecay,
}

/// `max(floor, min(1, 1 - log10((t + 1) / scale)))`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecaySchedule {
    pub kind: DecayKind,
    pub floor: f64,
    pub scale: f64,
}

impl DecaySchedule {
    pub fn log(floor: f64, scale: f64) -> Result<Self> {
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(Error::InvalidConfig(format!("decay floor {floor} not in (0, 1]")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("decay scale {scale} must be > 0")));
        }
        Ok(Self {
            kind: DecayKind::LogDecay,
            floor,
            scale,
        })
    }

    pub fn value(&self, t: usize) -> f64 {
        match self.kind {
            DecayKind::LogDecay => {
                let raw = 1.0 - ((t as f64 + 1.0) / self.scale).log10();
                raw.min(1.0).max(self.floor)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularConfig {
    pub buckets: BucketSpec,
    pub gamma: f64,
    pub epsilon: DecaySchedule,
    pub alpha: DecaySchedule,
}

impl TabularConfig {
    pub fn cartpole(env: &EnvParams) -> Self {
        Self {
            buckets: BucketSpec::cartpole(env),
            gamma: 1.0,
            epsilon: DecaySchedule::log(0.1, 25.0).expect("valid schedule"),
            alpha: DecaySchedule::log(0.1, 25.0).expect("valid schedule"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.buckets.validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} not in [0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// Q-table plus the schedules driving it across episodes.
#[derive(Clone, Debug)]
pub struct QLearner {
    pub config: TabularConfig,
    pub table: QTable,
}

impl QLearner {
    pub fn new(config: TabularConfig) -> Result<Self> {
        config.validate()?;
        let table = QTable::zeros(config.buckets.dims, Action::COUNT);
        Ok(Self { config, table })
    }

    pub fn discretize(&self, state: &EnvState) -> DiscreteState {
        bucketize(state, &self.config.buckets)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &EnvState, epsilon: f64, rng: &mut R) -> Action {
        select_action(&self.table, &self.discretize(state), epsilon, rng)
    }

    pub fn greedy(&self, state: &EnvState) -> Action {
        self.table.greedy_action(&self.discretize(state))
    }

    pub fn learn(
        &mut self,
        state: &EnvState,
        action: Action,
        reward: f64,
        next_state: &EnvState,
        alpha: f64,
    ) -> f64 {
        let ds = self.discretize(state);
        let ds_next = self.discretize(next_state);
        self.table
            .q_update(&ds, action, reward, &ds_next, alpha, self.config.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    use crate::RunRng;

    fn spec() -> BucketSpec {
        BucketSpec::cartpole(&EnvParams::default())
    }

    #[test]
    fn single_bucket_components_map_to_zero() {
        let ds = bucketize(&EnvState::new(2.0, -3.0, 0.0, 0.0), &spec());
        assert_eq!(ds.0[0], 0);
        assert_eq!(ds.0[1], 0);
    }

    #[test]
    fn upright_angle_lands_in_middle_bucket() {
        let mut s = spec();
        s.bounds[2] = (-0.2094, 0.2094);
        assert_eq!(bucketize(&EnvState::default(), &s).0[2], 3);
    }

    #[test]
    fn out_of_range_values_clamp() {
        assert_eq!(bucketize(&EnvState::new(0.0, 0.0, -1.0, 0.0), &spec()).0[2], 0);
        assert_eq!(bucketize(&EnvState::new(0.0, 0.0, 1.0, 0.0), &spec()).0[2], 5);
        assert_eq!(bucketize(&EnvState::new(0.0, 0.0, 0.0, 9.0), &spec()).0[3], 2);
    }

    #[test]
    fn invalid_bucket_specs_rejected() {
        assert!(BucketSpec::new([0, 1, 1, 1], spec().bounds).is_err());
        let mut bounds = spec().bounds;
        bounds[1] = (1.0, 1.0);
        assert!(BucketSpec::new([1, 1, 1, 1], bounds).is_err());
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut table = QTable::zeros([1, 1, 6, 3], 2);
        let ds = DiscreteState([0, 0, 2, 1]);
        let mut rng = RunRng::seed_from_u64(0);
        table.row_mut(&ds).copy_from_slice(&[0.1, 0.9]);
        assert_eq!(select_action(&table, &ds, 0.0, &mut rng), Action::Right);
        table.row_mut(&ds).copy_from_slice(&[0.5, 0.5]);
        assert_eq!(select_action(&table, &ds, 0.0, &mut rng), Action::Left);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let table = QTable::zeros([1, 1, 6, 3], 2);
        let ds = DiscreteState([0, 0, 0, 0]);
        let mut rng = RunRng::seed_from_u64(11);
        let n = 10_000;
        let right = (0..n)
            .filter(|_| select_action(&table, &ds, 1.0, &mut rng) == Action::Right)
            .count();
        let freq = right as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.02, "freq {freq}");
    }

    #[test]
    fn q_update_examples() {
        let ds = DiscreteState([0, 0, 3, 1]);
        let next = DiscreteState([0, 0, 4, 1]);

        let mut t = QTable::zeros([1, 1, 6, 3], 2);
        t.row_mut(&next).copy_from_slice(&[5.0, 7.0]);
        assert_eq!(t.q_update(&ds, Action::Left, 2.5, &next, 1.0, 0.0), 2.5);

        let mut t = QTable::zeros([1, 1, 6, 3], 2);
        t.row_mut(&ds).copy_from_slice(&[0.3, -0.2]);
        let before = t.clone();
        t.q_update(&ds, Action::Right, 10.0, &next, 0.0, 0.9);
        assert_eq!(t, before);

        let mut t = QTable::zeros([1, 1, 6, 3], 2);
        assert_eq!(t.q_update(&ds, Action::Left, 1.0, &next, 0.5, 0.9), 0.5);
        // only the updated entry moved
        assert_eq!(t.values().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn terminal_updates_converge_geometrically() {
        let ds = DiscreteState([0, 0, 1, 1]);
        let mut t = QTable::zeros([1, 1, 6, 3], 2);
        let alpha = 0.3;
        let mut gap = 1.0f64;
        for _ in 0..50 {
            let v = t.q_update_terminal(&ds, Action::Right, 1.0, alpha);
            gap *= 1.0 - alpha;
            assert!(((1.0 - v) - gap).abs() < 1e-12);
        }
    }

    #[test]
    fn decay_schedule_examples() {
        let s = DecaySchedule::log(0.1, 25.0).unwrap();
        assert_eq!(s.value(0), 1.0);
        assert_eq!(s.value(249), 0.1);
        assert_eq!(s.value(1_000_000), 0.1);
        assert!(DecaySchedule::log(0.0, 25.0).is_err());
        assert!(DecaySchedule::log(0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn bucketize_is_total(x in -1e6f64..1e6, xd in -1e6f64..1e6, th in -10f64..10.0, thd in -1e3f64..1e3) {
            let s = spec();
            let ds = bucketize(&EnvState::new(x, xd, th, thd), &s);
            for k in 0..4 {
                prop_assert!(ds.0[k] < s.dims[k]);
            }
            let table = QTable::zeros(s.dims, 2);
            prop_assert_eq!(table.row(&ds).len(), 2);
        }

        #[test]
        fn q_update_moves_toward_target(old in -50f64..50.0, r in -100f64..100.0, next in -50f64..50.0, alpha in 0.001f64..=1.0, gamma in 0f64..=1.0) {
            let ds = DiscreteState([0, 0, 0, 0]);
            let dn = DiscreteState([0, 0, 1, 0]);
            let mut t = QTable::zeros([1, 1, 6, 3], 2);
            t.row_mut(&ds)[0] = old;
            t.row_mut(&dn).copy_from_slice(&[next, next - 1.0]);
            let target = r + gamma * next;
            let new = t.q_update(&ds, Action::Left, r, &dn, alpha, gamma);
            prop_assert_eq!((new - old).signum() == (target - old).signum() || target == old, true);
        }

        #[test]
        fn schedule_monotone_and_bounded(t in 0usize..100_000, floor in 0.01f64..=1.0, scale in 0.5f64..100.0) {
            let s = DecaySchedule::log(floor, scale).unwrap();
            let v = s.value(t);
            prop_assert!(v >= floor && v <= 1.0);
            prop_assert!(s.value(t + 1) <= v);
        }
    }
}
