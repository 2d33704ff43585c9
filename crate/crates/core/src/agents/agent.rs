use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::preprocess::{preprocess, Crop, Frame, FRAME_SIZE};
use super::{AgentConfig, DeepAlgorithm};
use crate::environments::{EnvSpec, Environment, Observation, ObservationSpace};
use crate::error::{contract, Error, Result};
use crate::network::{clone_params, rmsprop_step, Architecture, ImageBatch, InputShape, Network, OptState, Tensor};
use crate::numerics::{Matrix, Rng};
use crate::replay::{Experience, FrameRingBuffer, TransitionBuffer};
use crate::tabular::select;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Replay storage matching the network input.
#[derive(Clone, Debug)]
pub enum Memory {
    Vector(TransitionBuffer<Vec<f64>>),
    Frames(FrameRingBuffer),
}

impl Memory {
    pub fn len(&self) -> usize {
        match self {
            Memory::Vector(b) => b.len(),
            Memory::Frames(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Turns observations into network states: vectors pass through, frames are
/// preprocessed and stacked with the most recent ones, the first frame of an
/// episode standing in for frames before it.
#[derive(Clone, Debug)]
pub struct StateTracker {
    history: usize,
    crop: Option<Crop>,
    frames: VecDeque<Frame>,
}

impl StateTracker {
    pub fn new(history: usize, crop: Option<Crop>) -> Self {
        Self {
            history,
            crop,
            frames: VecDeque::with_capacity(history + 1),
        }
    }

    pub fn begin(&mut self, obs: &Observation) -> Result<Vec<f64>> {
        self.frames.clear();
        self.advance(obs)
    }

    pub fn advance(&mut self, obs: &Observation) -> Result<Vec<f64>> {
        match obs {
            Observation::Vector(v) => Ok(v.clone()),
            Observation::Frame(raw) => {
                let frame = preprocess(raw, self.crop.unwrap_or_else(|| Crop::full(raw)), FRAME_SIZE)?;
                if self.frames.is_empty() {
                    self.frames.extend(std::iter::repeat_n(frame, self.history));
                } else {
                    self.frames.push_back(frame);
                    self.frames.pop_front();
                }
                Ok(self.frames.iter().flatten().map(|&v| v as f64).collect())
            }
            Observation::Discrete(_) => Err(contract("deep agents need vector or frame observations")),
        }
    }

    pub fn newest_frame(&self) -> Option<&Frame> {
        self.frames.back()
    }
}

/// Per-episode outcome.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeStats {
    /// Environment reward, before penalties or clipping.
    pub reward: f64,
    pub env_steps: usize,
    pub decisions: usize,
    /// Mean minibatch loss over the episode's gradient steps, if any.
    pub loss: Option<f64>,
}

/// Everything needed to restore an agent, apart from its replay memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub config: AgentConfig,
    pub algorithm: DeepAlgorithm,
    pub online: Network,
    pub target: Network,
    pub opt: OptState,
    pub global_step: u64,
    pub frames: u64,
    pub decisions: u64,
    pub episode: usize,
}

/// A Q-network, its periodically cloned target and a replay memory.
#[derive(Clone, Debug)]
pub struct DeepAgent {
    pub config: AgentConfig,
    pub algorithm: DeepAlgorithm,
    online: Network,
    target: Network,
    opt: OptState,
    memory: Memory,
    /// Gradient steps taken.
    pub global_step: u64,
    /// Environment frames consumed while training.
    pub frames: u64,
    /// Actions chosen while training.
    pub decisions: u64,
    /// Training episodes completed.
    pub episode: usize,
}

fn memory_for(arch: &Architecture, config: &AgentConfig) -> Memory {
    match arch.input {
        InputShape::Vector { .. } => Memory::Vector(TransitionBuffer::new(config.replay_capacity)),
        InputShape::Image(s) => Memory::Frames(FrameRingBuffer::new(config.replay_capacity, s.height, s.width)),
    }
}

impl DeepAgent {
    /// Agent with the standard architecture for `spec`: the two-layer MLP for
    /// vector observations, the convolutional stack for frames.
    pub fn new(algorithm: DeepAlgorithm, config: AgentConfig, spec: &EnvSpec, rng: &mut Rng) -> Result<Self> {
        let arch = match spec.observation {
            ObservationSpace::Vector { dim } => Architecture::control_mlp(dim, spec.action_count),
            ObservationSpace::Frame { .. } => Architecture::pixel_cnn(config.history, FRAME_SIZE, spec.action_count),
            ObservationSpace::Discrete { .. } => {
                return Err(Error::Config(format!("{} has a discrete state space; use a tabular agent", spec.name)))
            }
        };
        Self::with_architecture(algorithm, config, arch, rng)
    }

    pub fn with_architecture(
        algorithm: DeepAlgorithm,
        config: AgentConfig,
        arch: Architecture,
        rng: &mut Rng,
    ) -> Result<Self> {
        config.validate()?;
        let online = Network::new(arch, config.backend, rng)?;
        if let InputShape::Image(s) = online.architecture().input {
            if s.channels != config.history {
                return Err(Error::Config(format!(
                    "network stacks {} frames but history is {}",
                    s.channels, config.history
                )));
            }
        }
        let target = online.clone();
        let opt = OptState::new(&online, config.decay, config.epsilon_opt);
        let memory = memory_for(online.architecture(), &config);
        Ok(Self {
            config,
            algorithm,
            online,
            target,
            opt,
            memory,
            global_step: 0,
            frames: 0,
            decisions: 0,
            episode: 0,
        })
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

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut Memory {
        &mut self.memory
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            config: self.config.clone(),
            algorithm: self.algorithm,
            online: self.online.clone(),
            target: self.target.clone(),
            opt: self.opt.clone(),
            global_step: self.global_step,
            frames: self.frames,
            decisions: self.decisions,
            episode: self.episode,
        }
    }

    /// Restores an agent with an empty replay memory.
    pub fn from_snapshot(s: AgentSnapshot) -> Result<Self> {
        s.config.validate()?;
        s.online.validate()?;
        s.target.validate()?;
        if s.online.architecture() != s.target.architecture() {
            return Err(Error::Architecture("online and target networks differ".into()));
        }
        let memory = memory_for(s.online.architecture(), &s.config);
        Ok(Self {
            memory,
            config: s.config,
            algorithm: s.algorithm,
            online: s.online,
            target: s.target,
            opt: s.opt,
            global_step: s.global_step,
            frames: s.frames,
            decisions: s.decisions,
            episode: s.episode,
        })
    }

    /// Checks that `spec` can drive this agent's network.
    pub fn check_env(&self, spec: &EnvSpec) -> Result<()> {
        let arch = self.online.architecture();
        let ok = match (arch.input, spec.observation) {
            (InputShape::Vector { size }, ObservationSpace::Vector { dim }) => size == dim,
            (InputShape::Image(_), ObservationSpace::Frame { .. }) => true,
            _ => false,
        };
        if !ok || arch.outputs() != spec.action_count {
            return Err(Error::Architecture(format!(
                "network {:?} -> {} actions cannot drive {} ({:?}, {} actions)",
                arch.input,
                arch.outputs(),
                spec.name,
                spec.observation,
                spec.action_count
            )));
        }
        Ok(())
    }

    fn tensor(&self, states: &[&[f64]]) -> Result<Tensor> {
        match self.online.architecture().input {
            InputShape::Vector { .. } => Ok(Tensor::Flat(Matrix::from_columns(states)?)),
            InputShape::Image(s) => {
                let data: Vec<f64> = states.iter().flat_map(|x| x.iter().copied()).collect();
                Ok(Tensor::Images(ImageBatch::from_vec(states.len(), s.channels, s.height, s.width, data)?))
            }
        }
    }

    /// Online-network action values, one column per state.
    pub fn q_values(&self, states: &[&[f64]]) -> Result<Matrix> {
        self.online.predict(&self.tensor(states)?)
    }

    /// Exploration rate the training schedule currently prescribes.
    pub fn training_epsilon(&self) -> f64 {
        self.config.epsilon_schedule.epsilon(self.episode, self.decisions)
    }

    pub fn select_action(&self, state: &[f64], mode: Mode, rng: &mut Rng) -> Result<usize> {
        let q = self.q_values(&[state])?;
        let eps = match mode {
            Mode::Train => self.training_epsilon(),
            Mode::Eval => self.config.eval_epsilon,
        };
        select(self.config.policy, q.data(), eps, rng)
    }

    fn behaviour_action(&self, state: &[f64], rng: &mut Rng, actions: usize) -> Result<usize> {
        if self.memory.len() < self.config.replay_start {
            Ok(rng.below(actions))
        } else {
            self.select_action(state, Mode::Train, rng)
        }
    }

    fn ready(&self) -> bool {
        self.memory.len() >= self.config.replay_start && self.decisions % self.config.train_every as u64 == 0
    }

    /// One gradient step on a sampled minibatch; returns the loss.
    pub fn train_step(&mut self, rng: &mut Rng) -> Result<f64> {
        let k = self.config.minibatch;
        if self.memory.len() < self.config.replay_start.max(1) {
            return Err(contract(format!(
                "replay holds {} entries, training starts at {}",
                self.memory.len(),
                self.config.replay_start
            )));
        }
        let (states, actions, rewards, next_states, dones, next_actions) = match &self.memory {
            Memory::Vector(buf) => {
                let batch = buf.sample_minibatch(k, rng)?;
                let s: Vec<&[f64]> = batch.iter().map(|e| e.s.as_slice()).collect();
                let s2: Vec<&[f64]> = batch.iter().map(|e| e.s_next.as_slice()).collect();
                let next: Option<Vec<usize>> = batch
                    .iter()
                    .map(|e| if e.done { Some(0) } else { e.a_next })
                    .collect();
                (
                    self.tensor(&s)?,
                    batch.iter().map(|e| e.a).collect::<Vec<_>>(),
                    batch.iter().map(|e| e.r).collect::<Vec<_>>(),
                    self.tensor(&s2)?,
                    batch.iter().map(|e| e.done).collect::<Vec<_>>(),
                    next,
                )
            }
            Memory::Frames(ring) => {
                let b = ring.sample_states(k, rng)?;
                let next = b.indices.iter().map(|&t| ring.action((t + 1) % ring.capacity())).collect();
                (
                    Tensor::Images(b.states),
                    b.actions,
                    b.rewards,
                    Tensor::Images(b.next_states),
                    b.dones,
                    Some(next),
                )
            }
        };
        let next_actions = match self.algorithm {
            DeepAlgorithm::Dqn => None,
            DeepAlgorithm::Dsn => Some(next_actions.ok_or_else(|| contract("on-policy transition without a next action"))?),
        };
        let y = compute_targets(
            &self.target,
            &next_states,
            &rewards,
            &dones,
            self.config.gamma,
            self.algorithm,
            next_actions.as_deref(),
        )?;
        let (q, cache) = self.online.forward(&states)?;
        let (dz, loss) = masked_mse(&q, &actions, &y)?;
        let grads = self.online.backward(&cache, &dz)?;
        rmsprop_step(&mut self.online, &grads, &mut self.opt, self.config.learning_rate)?;
        self.global_step += 1;
        if self.global_step % self.config.copy_period == 0 {
            clone_params(&self.online, &mut self.target)?;
        }
        Ok(loss)
    }

    /// Stored reward: penalty for ending before the step limit, then clipping.
    fn shaped(&self, reward: f64, done: bool, env_step: usize, max_steps: usize) -> f64 {
        let mut r = reward;
        if done && env_step < max_steps {
            r += self.config.training_penalty;
        }
        match self.config.reward_clip {
            Some(b) => r.clamp(-b, b),
            None => r,
        }
    }

    /// Repeats `action` up to `action_repeat` times, stopping at episode end.
    /// Returns summed reward, done, the final observation and env steps so far.
    fn act(&self, env: &mut dyn Environment, action: usize) -> Result<(f64, bool, Observation, usize)> {
        let mut total = 0.0;
        let mut last = None;
        for _ in 0..self.config.action_repeat {
            let s = env.step(action)?;
            total += s.reward;
            let done = s.done;
            last = Some((s.observation, s.step, done));
            if done {
                break;
            }
        }
        let (obs, step, done) = last.expect("action_repeat is at least 1");
        Ok((total, done, obs, step))
    }

    pub fn run_episode(&mut self, env: &mut dyn Environment, rng: &mut Rng) -> Result<EpisodeStats> {
        match self.algorithm {
            DeepAlgorithm::Dqn => self.run_episode_dqn(env, rng),
            DeepAlgorithm::Dsn => self.run_episode_dsn(env, rng),
        }
    }

    /// One training episode of off-policy deep Q-learning.
    pub fn run_episode_dqn(&mut self, env: &mut dyn Environment, rng: &mut Rng) -> Result<EpisodeStats> {
        if self.algorithm != DeepAlgorithm::Dqn {
            return Err(contract("run_episode_dqn called on a deep SARSA agent"));
        }
        self.episode_loop(env, rng, false)
    }

    /// One training episode of on-policy deep SARSA.
    pub fn run_episode_dsn(&mut self, env: &mut dyn Environment, rng: &mut Rng) -> Result<EpisodeStats> {
        if self.algorithm != DeepAlgorithm::Dsn {
            return Err(contract("run_episode_dsn called on a deep Q-network agent"));
        }
        self.episode_loop(env, rng, true)
    }

    fn episode_loop(&mut self, env: &mut dyn Environment, rng: &mut Rng, on_policy: bool) -> Result<EpisodeStats> {
        self.check_env(env.spec())?;
        let actions = env.spec().action_count;
        let mut tracker = StateTracker::new(self.config.history, None);
        let mut state = tracker.begin(&env.reset(None))?;
        let mut action = self.behaviour_action(&state, rng, actions)?;
        let mut stats = EpisodeStats {
            reward: 0.0,
            env_steps: 0,
            decisions: 0,
            loss: None,
        };
        let (mut loss_sum, mut loss_n) = (0.0, 0usize);
        loop {
            let frame = tracker.newest_frame().cloned();
            let (reward, done, obs, env_step) = self.act(env, action)?;
            self.frames += (env_step - stats.env_steps) as u64;
            stats.env_steps = env_step;
            stats.reward += reward;
            stats.decisions += 1;
            self.decisions += 1;
            let stored = self.shaped(reward, done, env_step, env.spec().max_steps);
            let next_state = if done { None } else { Some(tracker.advance(&obs)?) };
            let next_action = match (&next_state, on_policy) {
                (Some(s2), true) => Some(self.behaviour_action(s2, rng, actions)?),
                _ => None,
            };
            match &mut self.memory {
                Memory::Vector(buf) => buf.push(Experience {
                    s: state,
                    a: action,
                    r: stored,
                    s_next: match &next_state {
                        Some(s2) => s2.clone(),
                        None => tracker.advance(&obs)?,
                    },
                    done,
                    a_next: next_action,
                }),
                Memory::Frames(ring) => {
                    let frame = frame.ok_or_else(|| contract("frame memory needs frame observations"))?;
                    ring.push(&frame, action, stored, done)?;
                }
            }
            if self.ready() {
                loss_sum += self.train_step(rng)?;
                loss_n += 1;
            }
            let Some(s2) = next_state else { break };
            state = s2;
            action = match next_action {
                Some(a) => a,
                None => self.behaviour_action(&state, rng, actions)?,
            };
        }
        self.episode += 1;
        stats.loss = (loss_n > 0).then(|| loss_sum / loss_n as f64);
        Ok(stats)
    }

    /// One episode with frozen parameters and evaluation-mode actions.
    pub fn eval_episode(&self, env: &mut dyn Environment, rng: &mut Rng) -> Result<f64> {
        self.check_env(env.spec())?;
        let mut tracker = StateTracker::new(self.config.history, None);
        let mut state = tracker.begin(&env.reset(None))?;
        let mut total = 0.0;
        loop {
            let a = self.select_action(&state, Mode::Eval, rng)?;
            let (reward, done, obs, _) = self.act(env, a)?;
            total += reward;
            if done {
                return Ok(total);
            }
            state = tracker.advance(&obs)?;
        }
    }
}

/// Squared error on the chosen action of each sample only. Returns
/// `dL/dQ`, zero for every other action, and the loss.
fn masked_mse(q: &Matrix, actions: &[usize], y: &[f64]) -> Result<(Matrix, f64)> {
    let n = actions.len();
    if q.cols() != n || y.len() != n {
        return Err(crate::error::shape_err("masked_mse", q.shape_str(), n));
    }
    let mut dz = Matrix::zeros(q.rows(), n);
    let mut loss = 0.0;
    for (j, (&a, &yj)) in actions.iter().zip(y).enumerate() {
        let diff = q.get(a, j) - yj;
        loss += diff * diff;
        dz.set(a, j, 2.0 / n as f64 * diff);
    }
    Ok((dz, loss / n as f64))
}

/// Bootstrap targets from the target network's values at the next states
/// (`next_q`, actions x batch). Terminal samples take the reward alone.
pub fn targets_from_q(
    next_q: &Matrix,
    rewards: &[f64],
    dones: &[bool],
    gamma: f64,
    algorithm: DeepAlgorithm,
    next_actions: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    if dones.len() != n || next_q.cols() != n {
        return Err(crate::error::shape_err("compute_targets", next_q.shape_str(), n));
    }
    let next_actions = match algorithm {
        DeepAlgorithm::Dqn => None,
        DeepAlgorithm::Dsn => Some(
            next_actions
                .filter(|a| a.len() == n)
                .ok_or_else(|| contract("on-policy targets need one next action per sample"))?,
        ),
    };
    (0..n)
        .map(|j| {
            if dones[j] {
                return Ok(rewards[j]);
            }
            let bootstrap = match next_actions {
                None => (0..next_q.rows()).map(|a| next_q.get(a, j)).fold(f64::NEG_INFINITY, f64::max),
                Some(na) => {
                    if na[j] >= next_q.rows() {
                        return Err(contract(format!("next action {} out of range", na[j])));
                    }
                    next_q.get(na[j], j)
                }
            };
            Ok(rewards[j] + gamma * bootstrap)
        })
        .collect()
}

/// Targets for a minibatch, reading only the target network.
pub fn compute_targets(
    target: &Network,
    next_states: &Tensor,
    rewards: &[f64],
    dones: &[bool],
    gamma: f64,
    algorithm: DeepAlgorithm,
    next_actions: Option<&[usize]>,
) -> Result<Vec<f64>> {
    let next_q = if dones.iter().all(|&d| d) {
        Matrix::zeros(target.outputs(), rewards.len())
    } else {
        target.predict(next_states)?
    };
    targets_from_q(&next_q, rewards, dones, gamma, algorithm, next_actions)
}

#[cfg(test)]
#[path = "tests.rs"]
mod tests;
