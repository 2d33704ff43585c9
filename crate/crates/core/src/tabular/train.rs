use serde::{Deserialize, Serialize};

use super::policy::{argmax_first, select, Policy};
use super::{QTable, VTable};
use crate::environments::{Environment, Observation};
use crate::error::{contract, Error, Result};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TabularAlgorithm {
    QLearning,
    Sarsa,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    pub gamma: f64,
    pub alpha0: f64,
    pub t_epsilon: f64,
    /// Added to `t_epsilon` every `increment_every` episodes.
    pub t_epsilon_increment: f64,
    pub increment_every: usize,
    /// Exploration rate is `epsilon_scale / t_epsilon`.
    pub epsilon_scale: f64,
    pub episodes: usize,
    pub policy: Policy,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            alpha0: 1.0,
            t_epsilon: 1.0,
            t_epsilon_increment: 0.005,
            increment_every: 100,
            epsilon_scale: 0.5,
            episodes: 10_000,
            policy: Policy::EpsilonGreedy,
        }
    }
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.alpha0 > 0.0) || !(self.t_epsilon > 0.0) || self.t_epsilon_increment < 0.0 {
            return bad("alpha0 and t_epsilon must be positive, the increment non-negative");
        }
        if self.increment_every == 0 {
            return bad("increment_every must be at least 1");
        }
        if !(0.0..=self.t_epsilon).contains(&self.epsilon_scale) {
            return bad("epsilon_scale must lie in [0, t_epsilon]");
        }
        Ok(())
    }

    /// Exploration rate in force during `episode` (0-based).
    pub fn epsilon(&self, episode: usize) -> f64 {
        let t = self.t_epsilon + self.t_epsilon_increment * (episode / self.increment_every) as f64;
        self.epsilon_scale / t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub q: QTable,
    /// Undiscounted reward of every training episode.
    pub rewards: Vec<f64>,
    /// Largest absolute change to any Q entry in each episode.
    pub deltas: Vec<f64>,
}

fn discrete(obs: &Observation) -> Result<usize> {
    obs.as_discrete()
        .ok_or_else(|| contract("tabular methods need a discrete observation space"))
}

fn state_count(env: &dyn Environment) -> Result<usize> {
    match env.spec().observation {
        crate::environments::ObservationSpace::Discrete { states } => Ok(states),
        _ => Err(contract(format!("{} is not a tabular environment", env.spec().name))),
    }
}

/// Trains a Q table on `env`, calling `on_episode(index, reward, max_delta, q)`
/// after every episode.
pub fn train_tabular(
    env: &mut dyn Environment,
    cfg: &TabularConfig,
    algorithm: TabularAlgorithm,
    rng: &mut Rng,
    mut on_episode: impl FnMut(usize, f64, f64, &QTable) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let states = state_count(env)?;
    let actions = env.spec().action_count;
    let mut q = QTable::new(states, actions);
    let mut rewards = Vec::with_capacity(cfg.episodes);
    let mut deltas = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let eps = cfg.epsilon(episode);
        let mut s = discrete(&env.reset(None))?;
        let mut a = select(cfg.policy, q.row(s), eps, rng)?;
        let (mut total, mut max_delta) = (0.0, 0.0f64);
        loop {
            let step = env.step(a)?;
            let s2 = discrete(&step.observation)?;
            total += step.reward;
            let (target, next) = if step.done {
                (step.reward, None)
            } else {
                match algorithm {
                    TabularAlgorithm::QLearning => (step.reward + cfg.gamma * q.max(s2), None),
                    TabularAlgorithm::Sarsa => {
                        let a2 = select(cfg.policy, q.row(s2), eps, rng)?;
                        (step.reward + cfg.gamma * q.get(s2, a2), Some(a2))
                    }
                }
            };
            max_delta = max_delta.max(q.update(s, a, target, cfg.alpha0).abs());
            if step.done {
                break;
            }
            a = match next {
                Some(a2) => a2,
                None => select(cfg.policy, q.row(s2), eps, rng)?,
            };
            s = s2;
        }
        on_episode(episode, total, max_delta, &q)?;
        rewards.push(total);
        deltas.push(max_delta);
    }
    Ok(TrainOutcome { q, rewards, deltas })
}

/// Off-policy TD control bootstrapping from `max_a Q(s', a)`.
pub fn q_learning_train(env: &mut dyn Environment, cfg: &TabularConfig, rng: &mut Rng) -> Result<TrainOutcome> {
    train_tabular(env, cfg, TabularAlgorithm::QLearning, rng, |_, _, _, _| Ok(()))
}

/// On-policy TD control bootstrapping from the action actually taken next.
pub fn sarsa_train(env: &mut dyn Environment, cfg: &TabularConfig, rng: &mut Rng) -> Result<TrainOutcome> {
    train_tabular(env, cfg, TabularAlgorithm::Sarsa, rng, |_, _, _, _| Ok(()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StepSize {
    Constant(f64),
    /// `alpha0 / k` on the k-th visit of a state.
    Decaying(f64),
}

impl StepSize {
    pub fn at(self, visit: u64) -> f64 {
        match self {
            StepSize::Constant(a) => a,
            StepSize::Decaying(a0) => a0 / visit as f64,
        }
    }
}

/// TD(0) evaluation of a fixed policy.
pub fn td0_evaluate(
    env: &mut dyn Environment,
    mut policy: impl FnMut(usize, &mut Rng) -> usize,
    step_size: StepSize,
    gamma: f64,
    episodes: usize,
    rng: &mut Rng,
) -> Result<VTable> {
    let mut v = VTable::new(state_count(env)?);
    for _ in 0..episodes {
        let mut s = discrete(&env.reset(None))?;
        loop {
            let a = policy(s, rng);
            let step = env.step(a)?;
            let s2 = discrete(&step.observation)?;
            let target = if step.done { step.reward } else { step.reward + gamma * v.get(s2) };
            v.update(s, target, step_size);
            if step.done {
                break;
            }
            s = s2;
        }
    }
    Ok(v)
}

/// States visited by acting greedily on `q` from a fresh reset, including the
/// start, and the reward collected. Stops at episode end or after `limit`
/// moves.
pub fn greedy_path(env: &mut dyn Environment, q: &QTable, limit: usize) -> Result<(Vec<usize>, f64, bool)> {
    let mut s = discrete(&env.reset(None))?;
    let mut path = vec![s];
    let mut total = 0.0;
    for _ in 0..limit {
        let step = env.step(argmax_first(q.row(s)))?;
        s = discrete(&step.observation)?;
        path.push(s);
        total += step.reward;
        if step.done {
            return Ok((path, total, true));
        }
    }
    Ok((path, total, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{make_env, EnvSpec, GridLayout, ObservationSpace, StepResult};

    /// States `0..len` in a line; action 1 moves right, action 0 stays.
    /// Entering state `len` ends the episode with reward `goal`.
    struct Chain {
        spec: EnvSpec,
        len: usize,
        goal: f64,
        pos: usize,
    }

    impl Chain {
        fn new(len: usize, goal: f64) -> Self {
            Self {
                spec: EnvSpec {
                    name: "chain".into(),
                    observation: ObservationSpace::Discrete { states: len + 1 },
                    action_count: 2,
                    max_steps: 100,
                    rewards: vec![],
                },
                len,
                goal,
                pos: 0,
            }
        }
    }

    impl Environment for Chain {
        fn spec(&self) -> &EnvSpec {
            &self.spec
        }
        fn reset(&mut self, _: Option<u64>) -> Observation {
            self.pos = 0;
            Observation::Discrete(0)
        }
        fn step(&mut self, action: usize) -> Result<StepResult> {
            self.pos += action;
            let done = self.pos == self.len;
            Ok(StepResult {
                observation: Observation::Discrete(self.pos),
                reward: if done { self.goal } else { 0.0 },
                done,
                step: 0,
            })
        }
    }

    /// Value iteration on the chain: Q(s, right), Q(s, stay).
    fn chain_oracle(len: usize, goal: f64, gamma: f64) -> Vec<[f64; 2]> {
        let mut q = vec![[0.0; 2]; len];
        for _ in 0..10_000 {
            let v = |q: &Vec<[f64; 2]>, s: usize| if s == len { 0.0 } else { q[s][0].max(q[s][1]) };
            let mut next = q.clone();
            for s in 0..len {
                next[s][0] = gamma * v(&q, s);
                next[s][1] = if s + 1 == len { goal } else { gamma * v(&q, s + 1) };
            }
            q = next;
        }
        q
    }

    fn cfg(episodes: usize) -> TabularConfig {
        TabularConfig {
            episodes,
            ..TabularConfig::default()
        }
    }

    #[test]
    fn defaults_and_schedule() {
        let c = TabularConfig::default();
        assert_eq!((c.gamma, c.alpha0, c.t_epsilon, c.t_epsilon_increment, c.episodes), (0.9, 1.0, 1.0, 0.005, 10_000));
        assert_eq!(c.epsilon(0), 0.5);
        assert_eq!(c.epsilon(99), 0.5);
        assert_eq!(c.epsilon(100), 0.5 / 1.005);
        assert!(TabularConfig { gamma: 1.5, ..c.clone() }.validate().is_err());
    }

    #[test]
    fn q_learning_reaches_the_bellman_fixed_point() {
        for (len, algo) in [(1, TabularAlgorithm::QLearning), (2, TabularAlgorithm::QLearning), (3, TabularAlgorithm::QLearning)] {
            let mut env = Chain::new(len, 1.0);
            let out = train_tabular(&mut env, &cfg(10_000), algo, &mut Rng::new(4), |_, _, _, _| Ok(())).unwrap();
            let oracle = chain_oracle(len, 1.0, 0.9);
            for s in 0..len {
                assert!((out.q.get(s, 1) - oracle[s][1]).abs() < 1e-3, "len {len} s {s}");
            }
            // the pre-terminal forward value is the undiscounted goal reward
            assert!((out.q.get(len - 1, 1) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_deltas_settle() {
        for algo in [TabularAlgorithm::QLearning, TabularAlgorithm::Sarsa] {
            for (len, seed) in [(2, 0), (4, 1), (6, 2)] {
                let mut env = Chain::new(len, 1.0);
                let out = train_tabular(&mut env, &cfg(10_000), algo, &mut Rng::new(seed), |_, _, _, _| Ok(())).unwrap();
                let tail = out.deltas[out.deltas.len() - 100..].iter().copied().fold(0.0, f64::max);
                assert!(tail < 1e-3, "{algo:?} len {len}: {tail}");
            }
        }
    }

    #[test]
    fn greedy_sarsa_and_q_learning_coincide() {
        let greedy = TabularConfig {
            epsilon_scale: 0.0,
            ..cfg(50)
        };
        let mut env = Chain::new(3, 1.0);
        let a = train_tabular(&mut env, &greedy, TabularAlgorithm::QLearning, &mut Rng::new(9), |_, _, _, _| Ok(())).unwrap();
        let b = train_tabular(&mut env, &greedy, TabularAlgorithm::Sarsa, &mut Rng::new(9), |_, _, _, _| Ok(())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_reward_leaves_q_at_zero() {
        for algo in [TabularAlgorithm::QLearning, TabularAlgorithm::Sarsa] {
            let mut env = Chain::new(3, 0.0);
            let out = train_tabular(&mut env, &cfg(20), algo, &mut Rng::new(1), |_, _, _, _| Ok(())).unwrap();
            assert!(out.deltas.iter().all(|&d| d == 0.0));
            assert!((0..4).all(|s| out.q.row(s) == [0.0, 0.0]));
        }
    }

    #[test]
    fn non_tabular_env_is_rejected() {
        let mut env = make_env("cartpole", 0).unwrap();
        assert!(matches!(q_learning_train(env.as_mut(), &cfg(1), &mut Rng::new(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn td0_solves_the_chain() {
        let mut env = Chain::new(3, 1.0);
        let v = td0_evaluate(&mut env, |_, _| 1, StepSize::Decaying(1.0), 0.9, 20_000, &mut Rng::new(0)).unwrap();
        for (s, expected) in [0.81, 0.9, 1.0].iter().enumerate() {
            assert!((v.get(s) - expected).abs() < 0.01, "{s}: {}", v.get(s));
        }
        let mut one = Chain::new(1, 2.5);
        let v = td0_evaluate(&mut one, |_, _| 1, StepSize::Decaying(1.0), 0.9, 10, &mut Rng::new(0)).unwrap();
        assert_eq!(v.get(0), 2.5);
        let mut zero = Chain::new(3, 0.0);
        let v = td0_evaluate(&mut zero, |_, _| 1, StepSize::Constant(0.5), 0.9, 10, &mut Rng::new(0)).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn maze_runner_policies_reach_the_goal() {
        let layout = GridLayout::maze_runner();
        for algo in [TabularAlgorithm::QLearning, TabularAlgorithm::Sarsa] {
            let mut env = make_env("maze_runner", 0).unwrap();
            let out = train_tabular(env.as_mut(), &cfg(2000), algo, &mut Rng::new(11), |_, _, _, _| Ok(())).unwrap();
            let (path, reward, ended) = greedy_path(env.as_mut(), &out.q, 50).unwrap();
            assert!(ended);
            assert_eq!(*path.last().unwrap(), layout.state_of(layout.goal), "{algo:?}");
            assert_eq!(path.len() - 1, 5);
            assert!((reward - (1.0 - 0.4)).abs() < 1e-12);
        }
    }
}
