//! Table-based value methods and the action-selection policies they share
//! with the deep agents.

mod policy;
mod train;

pub use policy::{
    argmax_first, argmax_random, epsilon_greedy, select, softmax_policy, softmax_probabilities, Policy,
};
pub use train::{
    greedy_path, q_learning_train, sarsa_train, td0_evaluate, train_tabular, StepSize, TabularAlgorithm,
    TabularConfig, TrainOutcome,
};

use serde::{Deserialize, Serialize};

/// Dense action-value table with per-entry update counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    states: usize,
    actions: usize,
    values: Vec<f64>,
    counts: Vec<u64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            states,
            actions,
            values: vec![0.0; states * actions],
            counts: vec![0; states * actions],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.actions..(s + 1) * self.actions]
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.actions + a]
    }

    /// Moves `Q(s,a)` toward `target` with step `alpha0 / k`, where `k` is
    /// this entry's update count including this one. Returns the change.
    pub fn update(&mut self, s: usize, a: usize, target: f64, alpha0: f64) -> f64 {
        let i = s * self.actions + a;
        self.counts[i] += 1;
        let delta = alpha0 / self.counts[i] as f64 * (target - self.values[i]);
        self.values[i] += delta;
        delta
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// State-value table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VTable {
    values: Vec<f64>,
    counts: Vec<u64>,
}

impl VTable {
    pub fn new(states: usize) -> Self {
        Self {
            values: vec![0.0; states],
            counts: vec![0; states],
        }
    }

    pub fn get(&self, s: usize) -> f64 {
        self.values[s]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn count(&self, s: usize) -> u64 {
        self.counts[s]
    }

    pub(crate) fn update(&mut self, s: usize, target: f64, step: StepSize) {
        self.counts[s] += 1;
        let alpha = step.at(self.counts[s]);
        self.values[s] += alpha * (target - self.values[s]);
    }
}
