//! Cart-Pole control with tabular Q-learning and deep Q-networks, built on a
//! native physics simulator and a small hand-written neural network library.
//!
//! Modules, bottom-up:
//!
//! - [`env`]: cart-pole dynamics and episode rules.
//! - [`tabular`]: state bucketization and the Q-table algorithm.
//! - [`nn`]: dense ReLU networks, dueling heads, backprop and Adam.
//! - [`replay`]: uniform ring buffer, sum tree and prioritized replay.
//! - [`agent`]: DQN / Double DQN targets, target-network sync, training step.
//! - [`harness`]: seeded training runs, metrics CSV, checkpoints.
//! - [`selftest`]: invariant checks runnable from the command line.

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod selftest;
pub mod tabular;

pub use error::{Error, Result};

/// Seedable generator used for every stochastic choice in a run.
///
/// ChaCha with 8 rounds: its output stream is fixed by the algorithm and the
/// seed, independent of platform and word size.
pub type RunRng = rand_chacha::ChaCha8Rng;
