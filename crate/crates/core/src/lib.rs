//! A desk-scale deep reinforcement learning laboratory.
//!
//! Tabular Q-learning and SARSA, DQN and deep SARSA agents with either
//! backpropagation or direct feedback alignment, the environments they are
//! trained on, frame-stacked experience replay, and the statistics used to
//! compare trained agents.

pub mod agents;
pub mod environments;
pub mod error;
pub mod harness;
pub mod network;
pub mod numerics;
pub mod replay;
pub mod stats;
pub mod tabular;

pub use error::{Error, Result};
