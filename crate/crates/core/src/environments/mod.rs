//! Environments behind one reset/step interface: two gridworlds, three
//! classic-control tasks and a small pixel game.

mod acrobot;
mod cartpole;
mod catch;
mod grid;
mod mountaincar;

pub use acrobot::Acrobot;
pub use cartpole::CartPole;
pub use catch::{PixelCatch, CATCH_CELL_PX, CATCH_DROPS, CATCH_GRID};
pub use grid::{Cell, GridLayout, GridWorld, GridAction};
pub use mountaincar::MountainCar;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Interleaved RGB image, `height x width x 3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbFrame {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl RgbFrame {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width * 3],
        }
    }

    pub fn pixel(&self, r: usize, c: usize) -> [u8; 3] {
        let i = (r * self.width + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, r: usize, c: usize, rgb: [u8; 3]) {
        let i = (r * self.width + c) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    /// Index of a tabular state.
    Discrete(usize),
    Vector(Vec<f64>),
    Frame(RgbFrame),
}

impl Observation {
    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Observation::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Observation::Discrete(s) => Some(*s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    /// Steps taken in this episode, including this one.
    pub step: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObservationSpace {
    Discrete { states: usize },
    Vector { dim: usize },
    Frame { height: usize, width: usize, channels: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub observation: ObservationSpace,
    pub action_count: usize,
    pub max_steps: usize,
    /// Named reward constants, e.g. `("goal", 10.0)`.
    pub rewards: Vec<(String, f64)>,
}

impl EnvSpec {
    pub fn reward(&self, name: &str) -> Option<f64> {
        self.rewards.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode. `Some(seed)` re-keys the environment's random
    /// stream so that the start state depends on the seed only; `None`
    /// continues the stream pinned at construction.
    fn reset(&mut self, episode_seed: Option<u64>) -> Observation;

    fn step(&mut self, action: usize) -> Result<StepResult>;

    /// Current screen. Only the pixel game renders.
    fn render_frame(&self) -> Result<RgbFrame> {
        Err(Error::Contract(format!("{} does not render frames", self.spec().name)))
    }
}

pub const ENV_NAMES: [&str; 6] = [
    "maze_runner",
    "cliff_walker",
    "cartpole",
    "mountaincar",
    "acrobot",
    "pixel_catch",
];

pub fn make_env(name: &str, seed: u64) -> Result<Box<dyn Environment>> {
    Ok(match name {
        "maze_runner" => Box::new(GridWorld::new(GridLayout::maze_runner())?),
        "cliff_walker" => Box::new(GridWorld::new(GridLayout::cliff_walker())?),
        "cartpole" => Box::new(CartPole::new(seed)),
        "mountaincar" => Box::new(MountainCar::new(seed)),
        "acrobot" => Box::new(Acrobot::new(seed)),
        "pixel_catch" => Box::new(PixelCatch::new(seed)),
        other => {
            return Err(Error::Config(format!(
                "unknown environment '{other}' (expected one of {})",
                ENV_NAMES.join(", ")
            )))
        }
    })
}

/// Bookkeeping shared by the episodic environments.
#[derive(Clone, Debug)]
pub(crate) struct EpisodeClock {
    pub steps: usize,
    pub done: bool,
    pub started: bool,
}

impl EpisodeClock {
    pub fn new() -> Self {
        Self {
            steps: 0,
            done: false,
            started: false,
        }
    }

    pub fn reset(&mut self) {
        self.steps = 0;
        self.done = false;
        self.started = true;
    }

    pub fn begin_step(&mut self, spec: &EnvSpec, action: usize) -> Result<()> {
        if !self.started {
            return Err(Error::Contract(format!("{}: step before reset", spec.name)));
        }
        if self.done {
            return Err(Error::Contract(format!("{}: step after episode end", spec.name)));
        }
        if action >= spec.action_count {
            return Err(Error::Contract(format!(
                "{}: action {action} out of range 0..{}",
                spec.name, spec.action_count
            )));
        }
        self.steps += 1;
        Ok(())
    }

    /// Marks the episode finished if it terminated or hit the step limit.
    pub fn finish(&mut self, spec: &EnvSpec, terminal: bool) -> bool {
        self.done = terminal || self.steps >= spec.max_steps;
        self.done
    }
}

/// Re-keys `rng` from an explicit episode seed.
pub(crate) fn reseed(rng: &mut Rng, episode_seed: Option<u64>) {
    if let Some(s) = episode_seed {
        *rng = Rng::with_stream(s, 0x5eed);
    }
}
