//! Seeded training and evaluation runs.

mod checkpoint;
mod config;
mod metrics;

pub use checkpoint::{
    load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint, Checkpoint, Model,
    CHECKPOINT_VERSION,
};
pub use config::{parse_config_file, parse_head, Overrides};
pub use metrics::{
    parse_metrics, read_metrics, render_metrics, trailing_mean, write_metrics, EpisodeRecord,
    METRICS_HEADER,
};

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;

use crate::agent::{AgentConfig, DqnAgent, TargetSync};
use crate::env::{is_solved, Action, CartPole, EnvParams, EnvState};
use crate::error::{Error, Result};
use crate::nn::{Head, Network, NetworkSpec};
use crate::replay::Transition;
use crate::tabular::{QLearner, TabularConfig};
use crate::RunRng;

/// Reward stored for transitions where the pole fell or the cart left the track.
pub const FAILURE_REWARD: f64 = -100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    QTable,
    Dqn,
    Ddqn,
    DdqnPa,
    DuelDqn,
    DuelDdqn,
    D3qnPer,
    DqnPer,
    DdqnPer,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::QTable,
        Algorithm::Dqn,
        Algorithm::Ddqn,
        Algorithm::DdqnPa,
        Algorithm::DuelDqn,
        Algorithm::DuelDdqn,
        Algorithm::D3qnPer,
        Algorithm::DqnPer,
        Algorithm::DdqnPer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::QTable => "qtable",
            Algorithm::Dqn => "dqn",
            Algorithm::Ddqn => "ddqn",
            Algorithm::DdqnPa => "ddqn-pa",
            Algorithm::DuelDqn => "duel-dqn",
            Algorithm::DuelDdqn => "duel-ddqn",
            Algorithm::D3qnPer => "d3qn-per",
            Algorithm::DqnPer => "dqn-per",
            Algorithm::DdqnPer => "ddqn-per",
        }
    }

    pub fn is_tabular(self) -> bool {
        self == Algorithm::QTable
    }

    /// Default agent settings for a deep variant.
    pub fn agent_config(self) -> AgentConfig {
        let base = AgentConfig::default();
        let dueling = NetworkSpec::new(4, vec![24, 24], 2, Head::DuelingMean);
        match self {
            Algorithm::QTable | Algorithm::Dqn => base,
            Algorithm::Ddqn => AgentConfig {
                double: true,
                ..base
            },
            Algorithm::DdqnPa => AgentConfig {
                double: true,
                target_sync: TargetSync::Polyak,
                ..base
            },
            Algorithm::DuelDqn => AgentConfig {
                network: dueling,
                ..base
            },
            Algorithm::DuelDdqn => AgentConfig {
                network: dueling,
                double: true,
                ..base
            },
            Algorithm::D3qnPer => AgentConfig {
                network: NetworkSpec::cartpole_large_dueling(),
                double: true,
                prioritized: true,
                batch_size: 32,
                memory_capacity: 10_000,
                ..base
            },
            Algorithm::DqnPer => AgentConfig {
                prioritized: true,
                ..base
            },
            Algorithm::DdqnPer => AgentConfig {
                double: true,
                prioritized: true,
                ..base
            },
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let key = match key.as_str() {
            "q-table" | "q-learning" | "tabular" => "qtable",
            "dueldqn" | "dueling-dqn" => "duel-dqn",
            "dueldddqn" | "dueling-ddqn" => "duel-ddqn",
            "d3qn" => "d3qn-per",
            other => other,
        };
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown algorithm {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub max_episodes: usize,
    pub seed: u64,
    pub stop_when_solved: bool,
    pub env: EnvParams,
    pub agent: AgentConfig,
    pub tabular: TabularConfig,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, seed: u64) -> Self {
        let env = EnvParams::default();
        Self {
            algorithm,
            max_episodes: 1000,
            seed,
            stop_when_solved: true,
            tabular: TabularConfig::cartpole(&env),
            agent: algorithm.agent_config(),
            env,
        }
    }

    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(v) = o.episodes {
            self.max_episodes = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.gamma {
            self.agent.gamma = v;
            self.tabular.gamma = v;
        }
        if let Some(v) = o.learning_rate {
            self.agent.learning_rate = v;
        }
        if let Some(v) = o.epsilon_min {
            self.agent.epsilon_min = v;
        }
        if let Some(v) = o.epsilon_decay {
            self.agent.epsilon_decay = v;
        }
        if let Some(v) = o.tau {
            self.agent.tau = v;
        }
        if let Some(v) = o.batch_size {
            self.agent.batch_size = v;
        }
        if let Some(v) = o.memory_size {
            self.agent.memory_capacity = v;
        }
        if let Some(head) = o.head {
            if self.agent.network.head.is_dueling() && head.is_dueling() {
                self.agent.network.head = head;
            } else if head != self.agent.network.head {
                return Err(Error::InvalidConfig(format!(
                    "head {head:?} is not available for {}",
                    self.algorithm
                )));
            }
        }
        if let Some(v) = o.stop_when_solved {
            self.stop_when_solved = v;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_episodes == 0 {
            return Err(Error::InvalidConfig("max_episodes must be >= 1".into()));
        }
        self.env.validate()?;
        if self.algorithm.is_tabular() {
            self.tabular.validate()
        } else {
            self.agent.validate()
        }
    }
}

/// A trained policy.
#[derive(Clone, Debug)]
pub enum Trained {
    Tabular(QLearner),
    Deep(Box<DqnAgent>),
}

impl Trained {
    pub fn greedy(&self, state: &EnvState) -> Result<Action> {
        match self {
            Trained::Tabular(q) => Ok(q.greedy(state)),
            Trained::Deep(agent) => agent.greedy(state),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub records: Vec<EpisodeRecord>,
    /// Episode at which the trailing-100 mean first reached 195.
    pub solved_at: Option<usize>,
    pub trained: Trained,
}

impl TrainingOutcome {
    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }
}

/// Runs episodes until solved (when `stop_when_solved`) or `max_episodes`.
///
/// Every random draw comes from one generator seeded by `config.seed`, so
/// a configuration and seed fully determine the returned records.
pub fn run_training(config: &RunConfig) -> Result<TrainingOutcome> {
    config.validate()?;
    let mut rng = RunRng::seed_from_u64(config.seed);
    let mut env = CartPole::new(config.env.clone())?;
    if config.algorithm.is_tabular() {
        train_tabular(config, &mut env, &mut rng)
    } else {
        train_deep(config, &mut env, &mut rng)
    }
}

struct Progress {
    records: Vec<EpisodeRecord>,
    scores: Vec<f64>,
    solved_at: Option<usize>,
}

impl Progress {
    fn new(capacity: usize) -> Self {
        Self {
            records: Vec::with_capacity(capacity),
            scores: Vec::with_capacity(capacity),
            solved_at: None,
        }
    }

    /// Records an episode; returns true once the run should stop.
    fn push(&mut self, score: f64, epsilon: f64, alpha: Option<f64>, stop_when_solved: bool) -> bool {
        self.scores.push(score);
        self.records.push(EpisodeRecord {
            episode: self.scores.len(),
            score,
            avg100: trailing_mean(&self.scores),
            epsilon,
            alpha,
        });
        if self.solved_at.is_none() && is_solved(&self.scores) {
            self.solved_at = Some(self.scores.len());
        }
        stop_when_solved && self.solved_at.is_some()
    }
}

fn shaped_reward(reward: f64, failed: bool) -> f64 {
    if failed {
        FAILURE_REWARD
    } else {
        reward
    }
}

fn train_tabular(config: &RunConfig, env: &mut CartPole, rng: &mut RunRng) -> Result<TrainingOutcome> {
    let mut learner = QLearner::new(config.tabular.clone())?;
    let mut progress = Progress::new(config.max_episodes);
    for episode in 0..config.max_episodes {
        let epsilon = config.tabular.epsilon.value(episode);
        let alpha = config.tabular.alpha.value(episode);
        let mut state = env.reset_with(rng);
        let mut score = 0.0;
        loop {
            let action = learner.act(&state, epsilon, rng);
            let step = env.step(action)?;
            score += step.reward;
            let reward = shaped_reward(step.reward, step.done_reason.is_failure());
            learner.learn(&state, action, reward, &step.next_state, alpha);
            state = step.next_state;
            if step.done {
                break;
            }
        }
        if progress.push(score, epsilon, Some(alpha), config.stop_when_solved) {
            break;
        }
    }
    Ok(TrainingOutcome {
        records: progress.records,
        solved_at: progress.solved_at,
        trained: Trained::Tabular(learner),
    })
}

fn train_deep(config: &RunConfig, env: &mut CartPole, rng: &mut RunRng) -> Result<TrainingOutcome> {
    let mut agent = DqnAgent::new(config.agent.clone(), rng)?;
    let mut progress = Progress::new(config.max_episodes);
    for _ in 0..config.max_episodes {
        let mut state = env.reset_with(rng);
        let mut score = 0.0;
        loop {
            let action = agent.act(&state, rng)?;
            let step = env.step(action)?;
            score += step.reward;
            let failed = step.done_reason.is_failure();
            agent.remember(Transition {
                state,
                action,
                reward: shaped_reward(step.reward, failed),
                next_state: step.next_state,
                done: failed,
            })?;
            agent.replay(rng)?;
            agent.end_step();
            state = step.next_state;
            if step.done {
                break;
            }
        }
        agent.end_episode();
        if progress.push(score, agent.epsilon(), None, config.stop_when_solved) {
            break;
        }
    }
    Ok(TrainingOutcome {
        records: progress.records,
        solved_at: progress.solved_at,
        trained: Trained::Deep(Box::new(agent)),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub scores: Vec<f64>,
    pub mean: f64,
}

/// Runs `episodes` greedy episodes with initial states drawn from `seed`.
pub fn evaluate<F>(mut policy: F, env_params: &EnvParams, episodes: usize, seed: u64) -> Result<EvalReport>
where
    F: FnMut(&EnvState) -> Result<Action>,
{
    if episodes == 0 {
        return Err(Error::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut rng = RunRng::seed_from_u64(seed);
    let mut env = CartPole::new(env_params.clone())?;
    let mut scores = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset_with(&mut rng);
        let mut score = 0.0;
        loop {
            let step = env.step(policy(&state)?)?;
            score += step.reward;
            state = step.next_state;
            if step.done {
                break;
            }
        }
        scores.push(score);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(EvalReport { scores, mean })
}

/// Greedy evaluation of a network.
pub fn evaluate_network(net: &Network, env_params: &EnvParams, episodes: usize, seed: u64) -> Result<EvalReport> {
    evaluate(
        |s| {
            let q = net.predict(&s.to_array())?;
            Ok(Action::from_index(crate::tabular::argmax(&q)).expect("two actions"))
        },
        env_params,
        episodes,
        seed,
    )
}
