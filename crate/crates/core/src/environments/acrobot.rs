use std::f64::consts::PI;

use super::{reseed, EnvSpec, Environment, EpisodeClock, Observation, ObservationSpace, StepResult};
use crate::error::Result;
use crate::numerics::Rng;

const DT: f64 = 0.2;
const LINK_LENGTH_1: f64 = 1.0;
const LINK_MASS_1: f64 = 1.0;
const LINK_MASS_2: f64 = 1.0;
const LINK_COM_1: f64 = 0.5;
const LINK_COM_2: f64 = 0.5;
const LINK_MOI: f64 = 1.0;
const G: f64 = 9.8;
const MAX_VEL_1: f64 = 4.0 * PI;
const MAX_VEL_2: f64 = 9.0 * PI;
pub const START_RANGE: f64 = 0.1;

/// Two-link under-actuated pendulum integrated with one RK4 step of 0.2 s.
/// Actions: 0 applies +1 torque, 1 applies -1, 2 none. -1 per step; the episode
/// ends when the tip rises one link length above the base, or at 500 steps.
pub struct Acrobot {
    spec: EnvSpec,
    rng: Rng,
    /// `[theta1, theta2, dtheta1, dtheta2]`.
    state: [f64; 4],
    clock: EpisodeClock,
}

fn wrap(x: f64) -> f64 {
    let mut x = x;
    while x > PI {
        x -= 2.0 * PI;
    }
    while x < -PI {
        x += 2.0 * PI;
    }
    x
}

fn derivs(s: [f64; 4], torque: f64) -> [f64; 4] {
    let (m1, m2, l1, lc1, lc2, i1, i2) = (LINK_MASS_1, LINK_MASS_2, LINK_LENGTH_1, LINK_COM_1, LINK_COM_2, LINK_MOI, LINK_MOI);
    let [t1, t2, dt1, dt2] = s;
    let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * t2.cos()) + i1 + i2;
    let d2 = m2 * (lc2 * lc2 + l1 * lc2 * t2.cos()) + i2;
    let phi2 = m2 * lc2 * G * (t1 + t2 - PI / 2.0).cos();
    let phi1 = -m2 * l1 * lc2 * dt2 * dt2 * t2.sin() - 2.0 * m2 * l1 * lc2 * dt2 * dt1 * t2.sin()
        + (m1 * lc1 + m2 * l1) * G * (t1 - PI / 2.0).cos()
        + phi2;
    let ddt2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dt1 * dt1 * t2.sin() - phi2)
        / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
    let ddt1 = -(d2 * ddt2 + phi1) / d1;
    [dt1, dt2, ddt1, ddt2]
}

fn rk4(s: [f64; 4], torque: f64, h: f64) -> [f64; 4] {
    let add = |a: [f64; 4], k: [f64; 4], f: f64| std::array::from_fn(|i| a[i] + f * k[i]);
    let k1 = derivs(s, torque);
    let k2 = derivs(add(s, k1, h / 2.0), torque);
    let k3 = derivs(add(s, k2, h / 2.0), torque);
    let k4 = derivs(add(s, k3, h), torque);
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

impl Acrobot {
    pub fn new(seed: u64) -> Self {
        Self {
            spec: EnvSpec {
                name: "acrobot".into(),
                observation: ObservationSpace::Vector { dim: 6 },
                action_count: 3,
                max_steps: 500,
                rewards: vec![("step".into(), -1.0)],
            },
            rng: Rng::new(seed),
            state: [0.0; 4],
            clock: EpisodeClock::new(),
        }
    }

    pub fn state(&self) -> [f64; 4] {
        self.state
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
    }

    /// Height of the tip above the base, in link lengths.
    pub fn tip_height(&self) -> f64 {
        -self.state[0].cos() - (self.state[0] + self.state[1]).cos()
    }

    fn observe(&self) -> Observation {
        let [t1, t2, d1, d2] = self.state;
        Observation::Vector(vec![t1.cos(), t1.sin(), t2.cos(), t2.sin(), d1, d2])
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, episode_seed: Option<u64>) -> Observation {
        reseed(&mut self.rng, episode_seed);
        self.clock.reset();
        for v in &mut self.state {
            *v = self.rng.uniform_range(-START_RANGE, START_RANGE);
        }
        self.observe()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.clock.begin_step(&self.spec, action)?;
        let torque = [1.0, -1.0, 0.0][action];
        let s = rk4(self.state, torque, DT);
        self.state = [
            wrap(s[0]),
            wrap(s[1]),
            s[2].clamp(-MAX_VEL_1, MAX_VEL_1),
            s[3].clamp(-MAX_VEL_2, MAX_VEL_2),
        ];
        let done = self.clock.finish(&self.spec, self.tip_height() > 1.0);
        Ok(StepResult {
            observation: self.observe(),
            reward: -1.0,
            done,
            step: self.clock.steps,
        })
    }
}
