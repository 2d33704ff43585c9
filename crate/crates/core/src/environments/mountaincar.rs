use super::{reseed, EnvSpec, Environment, EpisodeClock, Observation, ObservationSpace, StepResult};
use crate::error::Result;
use crate::numerics::Rng;

const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;
pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;

/// Under-powered car in a valley, `v += f*u - g*cos(3x)`, `x += v`.
/// Actions: 0 push left, 1 null, 2 push right. -1 per step; the episode ends at
/// `x >= 0.5` or 500 steps. Starts at rest with `x` uniform in `[-0.6, -0.4]`.
pub struct MountainCar {
    spec: EnvSpec,
    rng: Rng,
    position: f64,
    velocity: f64,
    clock: EpisodeClock,
}

impl MountainCar {
    pub fn new(seed: u64) -> Self {
        Self {
            spec: EnvSpec {
                name: "mountaincar".into(),
                observation: ObservationSpace::Vector { dim: 2 },
                action_count: 3,
                max_steps: 500,
                rewards: vec![("step".into(), -1.0)],
            },
            rng: Rng::new(seed),
            position: 0.0,
            velocity: 0.0,
            clock: EpisodeClock::new(),
        }
    }

    pub fn state(&self) -> (f64, f64) {
        (self.position, self.velocity)
    }

    pub fn set_state(&mut self, position: f64, velocity: f64) {
        self.position = position;
        self.velocity = velocity;
    }

    /// Kinetic plus potential energy per unit mass in the step's units; the
    /// gravity term is the derivative of `g*sin(3x)/3`.
    pub fn energy(position: f64, velocity: f64) -> f64 {
        0.5 * velocity * velocity + GRAVITY * (3.0 * position).sin() / 3.0
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, episode_seed: Option<u64>) -> Observation {
        reseed(&mut self.rng, episode_seed);
        self.clock.reset();
        self.position = self.rng.uniform_range(-0.6, -0.4);
        self.velocity = 0.0;
        Observation::Vector(vec![self.position, self.velocity])
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.clock.begin_step(&self.spec, action)?;
        let push = match action {
            0 => -1.0,
            1 => 0.0,
            _ => 1.0,
        };
        self.velocity += push * FORCE - GRAVITY * (3.0 * self.position).cos();
        self.velocity = self.velocity.clamp(-MAX_SPEED, MAX_SPEED);
        self.position = (self.position + self.velocity).clamp(MIN_POSITION, MAX_POSITION);
        if self.position == MIN_POSITION && self.velocity < 0.0 {
            self.velocity = 0.0;
        }
        let done = self.clock.finish(&self.spec, self.position >= GOAL_POSITION);
        Ok(StepResult {
            observation: Observation::Vector(vec![self.position, self.velocity]),
            reward: -1.0,
            done,
            step: self.clock.steps,
        })
    }
}
