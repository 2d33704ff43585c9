//! Deep Q-network and deep SARSA agents over vector or pixel observations,
//! with backpropagation or feedback-alignment training.

mod agent;
mod preprocess;

pub use agent::{
    compute_targets, targets_from_q, AgentSnapshot, DeepAgent, EpisodeStats, Memory, Mode, StateTracker,
};
pub use preprocess::{preprocess, Crop, Frame, LUMA, FRAME_SIZE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Backend;
use crate::tabular::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeepAlgorithm {
    /// Bootstraps from the greedy next action.
    Dqn,
    /// Bootstraps from the next action actually taken.
    Dsn,
}

impl std::fmt::Display for DeepAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DeepAlgorithm::Dqn => "dqn",
            DeepAlgorithm::Dsn => "dsn",
        })
    }
}

/// Exploration rate over the course of training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonSchedule {
    /// `1 / sqrt(episode + 1)`.
    PowerLaw,
    /// Straight line from `initial` at frame 0 to `final_value` at
    /// `final_frame`, constant afterwards.
    LinearAnneal {
        initial: f64,
        final_value: f64,
        final_frame: u64,
    },
}

impl EpsilonSchedule {
    /// `episode` and `frame` both count from 0.
    pub fn epsilon(&self, episode: usize, frame: u64) -> f64 {
        match *self {
            EpsilonSchedule::PowerLaw => 1.0 / ((episode + 1) as f64).sqrt(),
            EpsilonSchedule::LinearAnneal {
                initial,
                final_value,
                final_frame,
            } => {
                if final_frame == 0 || frame >= final_frame {
                    final_value
                } else {
                    initial + (final_value - initial) * frame as f64 / final_frame as f64
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub learning_rate: f64,
    /// RMSprop decay of the squared-gradient average.
    pub decay: f64,
    pub gamma: f64,
    /// RMSprop stabiliser.
    pub epsilon_opt: f64,
    /// Training steps between target-network refreshes.
    pub copy_period: u64,
    /// Added to the stored reward when an episode ends before `max_steps`.
    pub training_penalty: f64,
    pub episodes: usize,
    pub minibatch: usize,
    pub replay_capacity: usize,
    pub replay_start: usize,
    pub policy: Policy,
    pub backend: Backend,
    pub epsilon_schedule: EpsilonSchedule,
    /// Stored rewards are clipped to `±bound`.
    pub reward_clip: Option<f64>,
    /// Exploration rate while evaluating a frozen agent.
    pub eval_epsilon: f64,
    /// Environment steps per decision.
    pub action_repeat: usize,
    /// Decisions between gradient steps.
    pub train_every: usize,
    /// Frames per stacked pixel state.
    pub history: usize,
    /// Budget in environment frames; 0 means unlimited. Pixel runs stop at
    /// whichever of `episodes` and `max_frames` comes first.
    pub max_frames: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self::classic()
    }
}

impl AgentConfig {
    /// Classical-control settings.
    pub fn classic() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 0.99,
            gamma: 0.99,
            epsilon_opt: 1e-3,
            copy_period: 200,
            training_penalty: 0.0,
            episodes: 1000,
            minibatch: 32,
            replay_capacity: 10_000,
            replay_start: 100,
            policy: Policy::EpsilonGreedy,
            backend: Backend::Bp,
            epsilon_schedule: EpsilonSchedule::PowerLaw,
            reward_clip: None,
            eval_epsilon: 0.05,
            action_repeat: 1,
            train_every: 1,
            history: 1,
            max_frames: 0,
        }
    }

    /// Pixel-game settings.
    pub fn pixel() -> Self {
        Self {
            learning_rate: 2.5e-4,
            decay: 0.99,
            gamma: 0.99,
            epsilon_opt: 1e-3,
            copy_period: 10_000,
            training_penalty: 0.0,
            episodes: 10_000_000,
            minibatch: 32,
            replay_capacity: 500_000,
            replay_start: 50_000,
            policy: Policy::EpsilonGreedy,
            backend: Backend::Bp,
            epsilon_schedule: EpsilonSchedule::LinearAnneal {
                initial: 1.0,
                final_value: 0.1,
                final_frame: 500_000,
            },
            reward_clip: None,
            eval_epsilon: 0.05,
            action_repeat: 4,
            train_every: 1,
            history: 4,
            max_frames: 50_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon_opt > 0.0) || !(0.0..1.0).contains(&self.decay) {
            return bad("learning_rate and epsilon_opt must be positive, decay in [0, 1)".into());
        }
        if self.copy_period == 0 || self.minibatch == 0 || self.action_repeat == 0 || self.train_every == 0 || self.history == 0 {
            return bad("copy_period, minibatch, action_repeat, train_every and history must be at least 1".into());
        }
        if self.minibatch > self.replay_start {
            return bad(format!("minibatch {} exceeds replay_start {}", self.minibatch, self.replay_start));
        }
        if self.replay_start > self.replay_capacity {
            return bad(format!("replay_start {} exceeds replay_capacity {}", self.replay_start, self.replay_capacity));
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return bad("eval_epsilon must lie in [0, 1]".into());
        }
        if matches!(self.reward_clip, Some(b) if !(b > 0.0)) {
            return bad("reward_clip must be positive".into());
        }
        Ok(())
    }
}
