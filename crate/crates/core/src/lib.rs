//! Memory-augmented asymmetric self-play.
//!
//! Alice proposes a task by acting and then stopping; Bob is placed at Alice's
//! start state and must reach her end state. Alice may condition on an episodic
//! memory of her earlier (start, end) pairs. Both agents are one-hidden-layer
//! actor-critics trained with REINFORCE and a learned baseline, interleaving
//! self-play batches with target-task batches.

pub mod agents;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod memory;
pub mod nets;
pub mod nn;
pub mod registry;
pub mod rollout;
pub mod selfplay;
pub mod training;

pub use error::{Error, Result};
