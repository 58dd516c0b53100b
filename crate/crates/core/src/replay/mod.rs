//! Experience storage: a uniform ring buffer and a sum-tree backed
//! prioritized memory.

mod prioritized;
mod sumtree;
mod uniform;

pub use prioritized::{importance_weight, PerBatch, PerParams, PrioritizedReplay};
pub use sumtree::SumTree;
pub use uniform::UniformReplay;

use crate::env::{Action, EnvState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: Action,
    pub reward: f64,
    pub next_state: EnvState,
    pub done: bool,
}
