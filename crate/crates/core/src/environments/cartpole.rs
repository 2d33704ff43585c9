use super::{reseed, EnvSpec, Environment, EpisodeClock, Observation, ObservationSpace, StepResult};
use crate::error::Result;
use crate::numerics::Rng;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE: f64 = 10.0;
const TAU: f64 = 0.02;

pub const ANGLE_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const POSITION_LIMIT: f64 = 2.4;
/// Start state components are uniform in `±START_RANGE`.
pub const START_RANGE: f64 = 0.05;

/// Pole balanced on a cart, explicit Euler with a 0.02 s step. Actions:
/// 0 pushes left, 1 pushes right. +1 per step including the last; the episode
/// ends past 12 degrees, past 2.4 units, or at 500 steps.
pub struct CartPole {
    spec: EnvSpec,
    rng: Rng,
    state: [f64; 4],
    clock: EpisodeClock,
}

impl CartPole {
    pub fn new(seed: u64) -> Self {
        Self {
            spec: EnvSpec {
                name: "cartpole".into(),
                observation: ObservationSpace::Vector { dim: 4 },
                action_count: 2,
                max_steps: 500,
                rewards: vec![("step".into(), 1.0)],
            },
            rng: Rng::new(seed),
            state: [0.0; 4],
            clock: EpisodeClock::new(),
        }
    }

    /// `[x, x_dot, theta, theta_dot]`.
    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, episode_seed: Option<u64>) -> Observation {
        reseed(&mut self.rng, episode_seed);
        self.clock.reset();
        for v in &mut self.state {
            *v = self.rng.uniform_range(-START_RANGE, START_RANGE);
        }
        Observation::Vector(self.state.to_vec())
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.clock.begin_step(&self.spec, action)?;
        let [x, x_dot, theta, theta_dot] = self.state;
        let force = if action == 1 { FORCE } else { -FORCE };
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        self.state = [
            x + TAU * x_dot,
            x_dot + TAU * x_acc,
            theta + TAU * theta_dot,
            theta_dot + TAU * theta_acc,
        ];
        let failed = self.state[0].abs() > POSITION_LIMIT || self.state[2].abs() > ANGLE_LIMIT;
        let done = self.clock.finish(&self.spec, failed);
        Ok(StepResult {
            observation: Observation::Vector(self.state.to_vec()),
            reward: 1.0,
            done,
            step: self.clock.steps,
        })
    }
}
