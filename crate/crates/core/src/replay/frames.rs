use crate::error::{contract, shape_err, Error, Result};
use crate::network::ImageBatch;
use crate::numerics::Rng;

/// Frames per stacked state.
pub const STACK_DEPTH: usize = 4;

/// Ring of single preprocessed frames with per-frame action, reward and done
/// flag, all stored at the frame's time index. Stacked states are rebuilt
/// from consecutive frames when sampled.
#[derive(Clone, Debug)]
pub struct FrameRingBuffer {
    capacity: usize,
    height: usize,
    width: usize,
    frames: Vec<f32>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    pointer: usize,
    len: usize,
}

/// Minibatch of stacked transitions, states as `n x 4 x h x w` images.
#[derive(Clone, Debug)]
pub struct FrameBatch {
    pub indices: Vec<usize>,
    pub states: ImageBatch,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: ImageBatch,
    pub dones: Vec<bool>,
}

impl FrameRingBuffer {
    pub fn new(capacity: usize, height: usize, width: usize) -> Self {
        assert!(capacity > STACK_DEPTH, "frame ring must hold more than one stack");
        Self {
            capacity,
            height,
            width,
            frames: Vec::new(),
            actions: vec![0; capacity],
            rewards: vec![0.0; capacity],
            dones: vec![false; capacity],
            pointer: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Frames currently stored.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Slot the next frame will be written to.
    pub fn pointer(&self) -> usize {
        self.pointer
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.frames[t * n..(t + 1) * n]
    }

    pub fn action(&self, t: usize) -> usize {
        self.actions[t]
    }

    pub fn reward(&self, t: usize) -> f64 {
        self.rewards[t]
    }

    pub fn done(&self, t: usize) -> bool {
        self.dones[t]
    }

    pub fn push(&mut self, frame: &[f32], action: usize, reward: f64, done: bool) -> Result<()> {
        let n = self.frame_len();
        if frame.len() != n {
            return Err(shape_err("frame_push", format!("{}x{}", self.height, self.width), frame.len()));
        }
        let t = self.pointer;
        if self.frames.len() < (t + 1) * n {
            // storage grows until the ring first wraps
            self.frames.extend_from_slice(frame);
        } else {
            self.frames[t * n..(t + 1) * n].copy_from_slice(frame);
        }
        self.actions[t] = action;
        self.rewards[t] = reward;
        self.dones[t] = done;
        self.pointer = (t + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// How many pushes ago slot `t` was written (1 for the newest frame),
    /// or `None` if it holds nothing.
    fn age(&self, t: usize) -> Option<usize> {
        if t >= self.capacity {
            return None;
        }
        let age = (self.pointer + self.capacity - t - 1) % self.capacity + 1;
        (age <= self.len).then_some(age)
    }

    fn slot_back(&self, t: usize, k: usize) -> usize {
        (t + self.capacity - k) % self.capacity
    }

    /// Whether `t` may be drawn as a training sample: its whole window and
    /// the following frame are stored, it is more than four frames behind
    /// the write pointer, and no earlier frame of its window ends an episode.
    pub fn is_valid(&self, t: usize) -> bool {
        let Some(age) = self.age(t) else { return false };
        if age <= STACK_DEPTH || age + STACK_DEPTH - 1 > self.len {
            return false;
        }
        (1..STACK_DEPTH).all(|k| !self.dones[self.slot_back(t, k)])
    }

    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.capacity).filter(|&t| self.is_valid(t)).collect()
    }

    /// Frames `t-3..=t` stacked oldest first. Frames before the start of
    /// `t`'s episode, or before the oldest stored frame, are replaced by the
    /// episode's first available frame.
    pub fn assemble_state(&self, t: usize) -> Result<Vec<f32>> {
        let age = self
            .age(t)
            .ok_or_else(|| Error::Validity(format!("slot {t} holds no frame")))?;
        let n = self.frame_len();
        let mut out = vec![0.0; STACK_DEPTH * n];
        self.write_stack(t, age, &mut out);
        Ok(out)
    }

    fn write_stack(&self, t: usize, age: usize, out: &mut [f32]) {
        let n = self.frame_len();
        // how far back the window stays inside t's episode and the stored frames
        let mut reach = 0;
        for k in 1..STACK_DEPTH {
            if age + k > self.len || self.dones[self.slot_back(t, k)] {
                break;
            }
            reach = k;
        }
        for plane in 0..STACK_DEPTH {
            let back = (STACK_DEPTH - 1 - plane).min(reach);
            out[plane * n..(plane + 1) * n].copy_from_slice(self.frame(self.slot_back(t, back)));
        }
    }

    fn draw_valid(&self, rng: &mut Rng) -> Result<usize> {
        for _ in 0..1000 {
            let t = rng.below(self.capacity);
            if self.is_valid(t) {
                return Ok(t);
            }
        }
        let valid = self.valid_indices();
        if valid.is_empty() {
            return Err(contract("frame ring holds no valid state index"));
        }
        Ok(valid[rng.below(valid.len())])
    }

    /// `k` transitions drawn uniformly from the valid indices.
    pub fn sample_states(&self, k: usize, rng: &mut Rng) -> Result<FrameBatch> {
        let indices = (0..k).map(|_| self.draw_valid(rng)).collect::<Result<Vec<_>>>()?;
        let n = self.frame_len();
        let mut states = vec![0.0f64; k * STACK_DEPTH * n];
        let mut next_states = vec![0.0f64; k * STACK_DEPTH * n];
        let mut buf = vec![0.0f32; STACK_DEPTH * n];
        for (i, &t) in indices.iter().enumerate() {
            let span = i * STACK_DEPTH * n..(i + 1) * STACK_DEPTH * n;
            self.write_stack(t, self.age(t).unwrap_or(1), &mut buf);
            states[span.clone()].iter_mut().zip(&buf).for_each(|(d, &s)| *d = s as f64);
            if !self.dones[t] {
                let t1 = (t + 1) % self.capacity;
                self.write_stack(t1, self.age(t1).unwrap_or(1), &mut buf);
            }
            next_states[span].iter_mut().zip(&buf).for_each(|(d, &s)| *d = s as f64);
        }
        Ok(FrameBatch {
            actions: indices.iter().map(|&t| self.actions[t]).collect(),
            rewards: indices.iter().map(|&t| self.rewards[t]).collect(),
            dones: indices.iter().map(|&t| self.dones[t]).collect(),
            states: ImageBatch::from_vec(k, STACK_DEPTH, self.height, self.width, states)?,
            next_states: ImageBatch::from_vec(k, STACK_DEPTH, self.height, self.width, next_states)?,
            indices,
        })
    }
}
