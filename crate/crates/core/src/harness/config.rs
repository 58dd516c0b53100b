//! Flat `key = value` run configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! algo = dqn-per
//! episodes = 400
//! gamma = 0.9
//! ```
//!
//! Keys match the long CLI flags; `-` and `_` are interchangeable.

use std::path::PathBuf;
use std::str::FromStr;

use super::Algorithm;
use crate::error::{Error, Result};
use crate::nn::Head;

/// Optional settings layered over an algorithm's defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub algorithm: Option<Algorithm>,
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epsilon_min: Option<f64>,
    pub epsilon_decay: Option<f64>,
    pub tau: Option<f64>,
    pub batch_size: Option<usize>,
    pub memory_size: Option<usize>,
    pub head: Option<Head>,
    pub stop_when_solved: Option<bool>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Overrides {
    /// Fields set in `self` win; unset fields fall back to `other`.
    pub fn or(self, other: Overrides) -> Overrides {
        Overrides {
            algorithm: self.algorithm.or(other.algorithm),
            episodes: self.episodes.or(other.episodes),
            seed: self.seed.or(other.seed),
            gamma: self.gamma.or(other.gamma),
            learning_rate: self.learning_rate.or(other.learning_rate),
            epsilon_min: self.epsilon_min.or(other.epsilon_min),
            epsilon_decay: self.epsilon_decay.or(other.epsilon_decay),
            tau: self.tau.or(other.tau),
            batch_size: self.batch_size.or(other.batch_size),
            memory_size: self.memory_size.or(other.memory_size),
            head: self.head.or(other.head),
            stop_when_solved: self.stop_when_solved.or(other.stop_when_solved),
            out: self.out.or(other.out),
            checkpoint: self.checkpoint.or(other.checkpoint),
        }
    }
}

pub fn parse_head(s: &str) -> Result<Head> {
    match s.trim().to_ascii_lowercase().as_str() {
        "plain" => Ok(Head::Plain),
        "max" | "dueling-max" | "dueling_max" => Ok(Head::DuelingMax),
        "mean" | "avg" | "dueling-mean" | "dueling_mean" => Ok(Head::DuelingMean),
        other => Err(Error::InvalidConfig(format!(
            "unknown head {other:?}; expected plain, max or mean"
        ))),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| {
        Error::InvalidConfig(format!("line {line}: invalid value {value:?} for {key}"))
    })
}

pub fn parse_config_file(text: &str) -> Result<Overrides> {
    let mut o = Overrides::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("line {line_no}: expected key = value, got {raw:?}"))
        })?;
        let key = key.trim().to_ascii_lowercase().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "algo" | "algorithm" => o.algorithm = Some(value.parse()?),
            "episodes" => o.episodes = Some(parse_value(&key, value, line_no)?),
            "seed" => o.seed = Some(parse_value(&key, value, line_no)?),
            "gamma" => o.gamma = Some(parse_value(&key, value, line_no)?),
            "lr" | "learning-rate" => o.learning_rate = Some(parse_value(&key, value, line_no)?),
            "epsilon-min" => o.epsilon_min = Some(parse_value(&key, value, line_no)?),
            "epsilon-decay" => o.epsilon_decay = Some(parse_value(&key, value, line_no)?),
            "tau" => o.tau = Some(parse_value(&key, value, line_no)?),
            "batch-size" => o.batch_size = Some(parse_value(&key, value, line_no)?),
            "memory-size" => o.memory_size = Some(parse_value(&key, value, line_no)?),
            "head" => o.head = Some(parse_head(value)?),
            "stop-when-solved" => o.stop_when_solved = Some(parse_value(&key, value, line_no)?),
            "out" => o.out = Some(PathBuf::from(value)),
            "checkpoint" => o.checkpoint = Some(PathBuf::from(value)),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "line {line_no}: unknown key {key:?}"
                )))
            }
        }
    }
    Ok(o)
}
