//! Experience storage: a flat transition ring for vector observations and a
//! frame ring that rebuilds stacked pixel states on demand.

mod frames;

pub use frames::{FrameBatch, FrameRingBuffer, STACK_DEPTH};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::numerics::Rng;

/// One transition `(s, a, r, s', done)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience<S = Vec<f64>> {
    pub s: S,
    pub a: usize,
    pub r: f64,
    pub s_next: S,
    pub done: bool,
    /// Action chosen in `s_next`, kept for on-policy targets.
    pub a_next: Option<usize>,
}

/// Fixed-capacity ring of transitions; once full the oldest entry is
/// overwritten.
#[derive(Clone, Debug)]
pub struct TransitionBuffer<S = Vec<f64>> {
    capacity: usize,
    entries: Vec<Experience<S>>,
    write_index: usize,
}

impl<S> TransitionBuffer<S> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            entries: Vec::with_capacity(capacity.min(1 << 16)),
            write_index: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, e: Experience<S>) {
        if self.entries.len() < self.capacity {
            self.entries.push(e);
        } else {
            self.entries[self.write_index] = e;
        }
        self.write_index = (self.write_index + 1) % self.capacity;
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Experience<S>> {
        let split = if self.entries.len() < self.capacity { 0 } else { self.write_index };
        self.entries[split..].iter().chain(&self.entries[..split])
    }

    /// `k` transitions drawn uniformly with replacement.
    pub fn sample_minibatch(&self, k: usize, rng: &mut Rng) -> Result<Vec<&Experience<S>>> {
        if self.entries.len() < k || self.entries.is_empty() {
            return Err(contract(format!(
                "cannot sample {k} transitions from a buffer holding {}",
                self.entries.len()
            )));
        }
        Ok((0..k).map(|_| &self.entries[rng.below(self.entries.len())]).collect())
    }
}
