//! Deep Q-learning agents (DQN, Double DQN, dueling variants) with uniform
//! or prioritized experience replay.

use rand::Rng;

use crate::env::{Action, EnvState};
use crate::error::{Error, Result};
use crate::nn::{Adam, Head, Network, NetworkSpec};
use crate::replay::{PerParams, PrioritizedReplay, Transition, UniformReplay};
use crate::tabular::argmax;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetSync {
    /// Copy the online weights every `interval_episodes` episodes.
    Hard { interval_episodes: usize },
    /// Blend `tau` of the online weights into the target after every step.
    Polyak,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub epsilon_init: f64,
    pub epsilon_min: f64,
    /// Multiplicative decay applied after every training step.
    pub epsilon_decay: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub double: bool,
    pub prioritized: bool,
    pub per: PerParams,
    pub network: NetworkSpec,
    pub target_sync: TargetSync,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            learning_rate: 0.001,
            epsilon_init: 1.0,
            epsilon_min: 0.01,
            epsilon_decay: 0.995,
            tau: 0.1,
            batch_size: 24,
            memory_capacity: 2000,
            double: false,
            prioritized: false,
            per: PerParams::default(),
            network: NetworkSpec::cartpole(),
            target_sync: TargetSync::Hard {
                interval_episodes: 1,
            },
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} not in [0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} not in (0, 1]", self.tau));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be > 0", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.epsilon_init)
            || !(0.0..=1.0).contains(&self.epsilon_min)
            || self.epsilon_min > self.epsilon_init
        {
            return bad(format!(
                "need 0 <= epsilon_min ({}) <= epsilon_init ({}) <= 1",
                self.epsilon_min, self.epsilon_init
            ));
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return bad(format!("epsilon decay {} not in (0, 1]", self.epsilon_decay));
        }
        if self.batch_size == 0 || self.memory_capacity < self.batch_size {
            return bad(format!(
                "need 1 <= batch size ({}) <= memory capacity ({})",
                self.batch_size, self.memory_capacity
            ));
        }
        if let TargetSync::Hard { interval_episodes: 0 } = self.target_sync {
            return bad("hard sync interval must be >= 1".into());
        }
        self.per.validate()?;
        self.network.validate()?;
        if self.network.input_dim != 4 || self.network.output_dim != Action::COUNT {
            return bad("network must map 4 state components to 2 actions".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Memory {
    Uniform(UniformReplay),
    Prioritized(PrioritizedReplay),
}

impl Memory {
    pub fn len(&self) -> usize {
        match self {
            Memory::Uniform(m) => m.len(),
            Memory::Prioritized(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bootstrapped value of a transition's taken action.
///
/// DQN: `r + γ·max Q′(s′, ·)`. Double DQN: the target network selects
/// `a* = argmax Q′(s′, ·)` and the online network evaluates `Q(s′, a*)`.
/// Terminal transitions use `r` alone.
pub fn td_target(
    t: &Transition,
    online: &Network,
    target: &Network,
    gamma: f64,
    double: bool,
) -> Result<f64> {
    if t.done {
        return Ok(t.reward);
    }
    let next = t.next_state.to_array();
    let selector = target.predict(&next)?;
    let bootstrap = if double {
        online.predict(&next)?[argmax(&selector)]
    } else {
        selector.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(t.reward + gamma * bootstrap)
}

fn target_vectors(
    batch: &[Transition],
    online: &Network,
    target: &Network,
    gamma: f64,
    double: bool,
) -> Result<Vec<Vec<f64>>> {
    batch
        .iter()
        .map(|t| {
            let mut q = online.predict(&t.state.to_array())?;
            q[t.action.index()] = td_target(t, online, target, gamma, double)?;
            Ok(q)
        })
        .collect()
}

/// Online predictions with the taken action's entry replaced by the DQN target.
pub fn dqn_targets(
    batch: &[Transition],
    online: &Network,
    target: &Network,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    target_vectors(batch, online, target, gamma, false)
}

/// As [`dqn_targets`] with the Double DQN bootstrap.
pub fn ddqn_targets(
    batch: &[Transition],
    online: &Network,
    target: &Network,
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    target_vectors(batch, online, target, gamma, true)
}

#[derive(Clone, Debug)]
pub struct DqnAgent {
    config: AgentConfig,
    online: Network,
    target: Network,
    optimizer: Adam,
    epsilon: f64,
    memory: Memory,
    train_steps: u64,
    episodes: u64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let online = Network::build_with(&config.network, rng)?;
        let target = online.clone();
        Self::from_networks(config, online, target)
    }

    pub fn from_networks(config: AgentConfig, online: Network, target: Network) -> Result<Self> {
        config.validate()?;
        if online.spec() != &config.network || target.spec() != &config.network {
            return Err(Error::InvalidConfig(
                "network shapes do not match agent configuration".into(),
            ));
        }
        let memory = if config.prioritized {
            Memory::Prioritized(PrioritizedReplay::new(config.memory_capacity, config.per)?)
        } else {
            Memory::Uniform(UniformReplay::new(config.memory_capacity)?)
        };
        Ok(Self {
            optimizer: Adam::for_network(&online),
            epsilon: config.epsilon_init,
            config,
            online,
            target,
            memory,
            train_steps: 0,
            episodes: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn online(&self) -> &Network {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Network {
        &mut self.online
    }

    pub fn target(&self) -> &Network {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut Network {
        &mut self.target
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(self.config.epsilon_min, self.config.epsilon_init);
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn greedy(&self, state: &EnvState) -> Result<Action> {
        let q = self.online.predict(&state.to_array())?;
        Ok(Action::from_index(argmax(&q)).expect("two-action network"))
    }

    /// ε-greedy action from the online network.
    pub fn act<R: Rng + ?Sized>(&self, state: &EnvState, rng: &mut R) -> Result<Action> {
        if rng.gen::<f64>() < self.epsilon {
            Ok(Action::random(rng))
        } else {
            self.greedy(state)
        }
    }

    /// TD error of `t` against the current networks, `target − Q(s, a)`.
    pub fn td_error(&self, t: &Transition) -> Result<f64> {
        let q = self.online.predict(&t.state.to_array())?;
        let y = td_target(t, &self.online, &self.target, self.config.gamma, self.config.double)?;
        Ok(y - q[t.action.index()])
    }

    pub fn remember(&mut self, t: Transition) -> Result<()> {
        let td = match &self.memory {
            Memory::Uniform(_) => None,
            Memory::Prioritized(_) => Some(self.td_error(&t)?),
        };
        match &mut self.memory {
            Memory::Uniform(m) => m.push(t),
            Memory::Prioritized(m) => {
                m.push(t, td.expect("computed above"))?;
            }
        }
        Ok(())
    }

    /// One optimizer step on a replayed batch. Returns the weighted mean
    /// squared TD error, or `None` when memory holds fewer than `batch_size`
    /// transitions (nothing changes in that case).
    pub fn replay<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        let batch_size = self.config.batch_size;
        if self.memory.len() < batch_size {
            return Ok(None);
        }
        let (batch, leaves, weights) = match &mut self.memory {
            Memory::Uniform(m) => (m.sample(batch_size, rng)?, Vec::new(), vec![1.0; batch_size]),
            Memory::Prioritized(m) => {
                let b = m.sample(batch_size, rng)?;
                (b.transitions, b.leaves, b.weights)
            }
        };

        let mut grads = self.online.zeros_like();
        let mut td_errors = Vec::with_capacity(batch.len());
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        let mut output_error = vec![0.0; self.config.network.output_dim];
        for (t, &w) in batch.iter().zip(&weights) {
            let (q, cache) = self.online.forward(&t.state.to_array())?;
            let y = td_target(t, &self.online, &self.target, self.config.gamma, self.config.double)?;
            let a = t.action.index();
            let delta = y - q[a];
            td_errors.push(delta);
            loss += w * delta * delta * scale;
            output_error.iter_mut().for_each(|e| *e = 0.0);
            output_error[a] = -2.0 * w * delta * scale;
            self.online.backward_into(&cache, &output_error, &mut grads)?;
        }
        self.optimizer
            .step(&mut self.online, &grads, self.config.learning_rate)?;

        if let Memory::Prioritized(m) = &mut self.memory {
            m.update_priorities(&leaves, &td_errors)?;
        }
        self.epsilon = (self.epsilon * self.config.epsilon_decay).max(self.config.epsilon_min);
        self.train_steps += 1;
        Ok(Some(loss))
    }

    pub fn hard_sync(&mut self) {
        self.target.copy_from(&self.online);
    }

    pub fn polyak_sync(&mut self) {
        self.target.blend_from(&self.online, self.config.tau);
    }

    pub fn sync_target(&mut self, mode: TargetSync) {
        match mode {
            TargetSync::Hard { .. } => self.hard_sync(),
            TargetSync::Polyak => self.polyak_sync(),
        }
    }

    /// Per-step bookkeeping; applies Polyak averaging when configured.
    pub fn end_step(&mut self) {
        if self.config.target_sync == TargetSync::Polyak {
            self.polyak_sync();
        }
    }

    /// Per-episode bookkeeping; applies hard syncs on their interval.
    pub fn end_episode(&mut self) {
        self.episodes += 1;
        if let TargetSync::Hard { interval_episodes } = self.config.target_sync {
            if self.episodes.is_multiple_of(interval_episodes as u64) {
                self.hard_sync();
            }
        }
    }

    pub fn head(&self) -> Head {
        self.config.network.head
    }
}
