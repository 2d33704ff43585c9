use super::*;
use crate::agents::EpsilonSchedule;
use crate::environments::{make_env, EnvSpec, Observation, ObservationSpace, RgbFrame, StepResult};
use crate::network::{Layer, LayerSpec};
use crate::numerics::ActivationKind;

/// Vector environment driven by a step function of (position, action).
struct Scripted {
    spec: EnvSpec,
    pos: f64,
    steps: usize,
    start: f64,
    done_after: usize,
    rewards: Vec<f64>,
}

impl Scripted {
    fn new(start: f64, done_after: usize, max_steps: usize, rewards: Vec<f64>) -> Self {
        Self {
            spec: EnvSpec {
                name: "scripted".into(),
                observation: ObservationSpace::Vector { dim: 1 },
                action_count: 2,
                max_steps,
                rewards: vec![],
            },
            pos: start,
            steps: 0,
            start,
            done_after,
            rewards,
        }
    }
}

impl Environment for Scripted {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn reset(&mut self, _: Option<u64>) -> Observation {
        self.pos = self.start;
        self.steps = 0;
        Observation::Vector(vec![self.pos])
    }
    fn step(&mut self, action: usize) -> Result<StepResult> {
        self.pos += if action == 1 { 1.0 } else { -1.0 };
        self.steps += 1;
        Ok(StepResult {
            observation: Observation::Vector(vec![self.pos]),
            reward: self.rewards[(self.steps - 1) % self.rewards.len()],
            done: self.steps >= self.done_after || self.steps >= self.spec.max_steps,
            step: self.steps,
        })
    }
}

/// Frame environment counting its own steps; reward 1 per step.
struct Blinker {
    spec: EnvSpec,
    steps: usize,
}

impl Environment for Blinker {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn reset(&mut self, _: Option<u64>) -> Observation {
        self.steps = 0;
        Observation::Frame(RgbFrame::new(8, 8))
    }
    fn step(&mut self, _: usize) -> Result<StepResult> {
        self.steps += 1;
        let mut f = RgbFrame::new(8, 8);
        f.set_pixel(self.steps % 8, 0, [255, 255, 255]);
        Ok(StepResult {
            observation: Observation::Frame(f),
            reward: 1.0,
            done: self.steps >= self.spec.max_steps,
            step: self.steps,
        })
    }
}

fn frozen_config() -> AgentConfig {
    AgentConfig {
        minibatch: 1,
        replay_start: 1,
        train_every: 1_000_000,
        epsilon_schedule: EpsilonSchedule::LinearAnneal {
            initial: 0.0,
            final_value: 0.0,
            final_frame: 0,
        },
        ..AgentConfig::classic()
    }
}

/// Single linear layer with the given weights and biases.
fn linear_agent(algorithm: DeepAlgorithm, config: AgentConfig, w: Vec<Vec<f64>>, b: Vec<f64>) -> DeepAgent {
    let arch = Architecture::dense(w[0].len(), &[], w.len());
    let mut agent = DeepAgent::with_architecture(algorithm, config, arch, &mut Rng::new(0)).unwrap();
    set_linear(agent.online_mut(), &w, &b);
    let online = agent.online().clone();
    clone_params(&online, &mut agent.target).unwrap();
    agent
}

fn set_linear(net: &mut Network, w: &[Vec<f64>], b: &[f64]) {
    let Layer::Dense(d) = &mut net.layers_mut()[0] else { panic!() };
    d.weights = Matrix::from_rows(w);
    d.bias = Matrix::column(b);
}

#[test]
fn greedy_selection_takes_the_argmax() {
    let agent = linear_agent(DeepAlgorithm::Dqn, frozen_config(), vec![vec![0.0], vec![0.0]], vec![1.0, 5.0]);
    let mut rng = Rng::new(0);
    assert_eq!(agent.select_action(&[3.0], Mode::Train, &mut rng).unwrap(), 1);
    assert!(agent.select_action(&[3.0, 1.0], Mode::Train, &mut rng).is_err());
}

#[test]
fn target_examples() {
    let next_q = Matrix::from_rows(&[vec![2.0], vec![7.0]]);
    let y = targets_from_q(&next_q, &[1.0], &[false], 0.99, DeepAlgorithm::Dqn, None).unwrap();
    assert!((y[0] - 7.93).abs() < 1e-12);
    let y = targets_from_q(&next_q, &[1.0], &[false], 0.99, DeepAlgorithm::Dsn, Some(&[0])).unwrap();
    assert!((y[0] - 2.98).abs() < 1e-12);
    let y = targets_from_q(&next_q, &[-1.0], &[true], 0.99, DeepAlgorithm::Dqn, None).unwrap();
    assert_eq!(y[0], -1.0);
    let y = targets_from_q(&next_q, &[0.3], &[false], 0.0, DeepAlgorithm::Dqn, None).unwrap();
    assert_eq!(y[0], 0.3);
    assert!(matches!(
        targets_from_q(&next_q, &[1.0], &[false], 0.99, DeepAlgorithm::Dsn, None),
        Err(Error::Contract(_))
    ));
}

#[test]
fn greedy_next_actions_make_sarsa_equal_q_learning() {
    let mut rng = Rng::new(4);
    let next_q = Matrix::from_vec(3, 8, (0..24).map(|_| rng.standard_normal()).collect()).unwrap();
    let rewards: Vec<f64> = (0..8).map(|i| i as f64).collect();
    let dones: Vec<bool> = (0..8).map(|i| i % 3 == 0).collect();
    let greedy: Vec<usize> = (0..8)
        .map(|j| crate::tabular::argmax_first(&next_q.col_vec(j)))
        .collect();
    let a = targets_from_q(&next_q, &rewards, &dones, 0.9, DeepAlgorithm::Dqn, None).unwrap();
    let b = targets_from_q(&next_q, &rewards, &dones, 0.9, DeepAlgorithm::Dsn, Some(&greedy)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn masked_loss_only_touches_chosen_actions() {
    let q = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
    let (dz, loss) = masked_mse(&q, &[0, 1, 0], &[0.0, 5.0, 1.0]).unwrap();
    assert_eq!(dz.row(0), &[2.0 / 3.0, 0.0, 4.0 / 3.0]);
    assert_eq!(dz.row(1), &[0.0, 0.0, 0.0]);
    assert!((loss - 5.0 / 3.0).abs() < 1e-15);
}

fn push_vector(agent: &mut DeepAgent, e: Experience<Vec<f64>>) {
    let Memory::Vector(buf) = agent.memory_mut() else { panic!() };
    buf.push(e);
}

#[test]
fn zero_td_error_leaves_parameters_unchanged() {
    let mut agent = linear_agent(DeepAlgorithm::Dqn, frozen_config(), vec![vec![0.5], vec![-1.0]], vec![0.1, 0.2]);
    // terminal transition whose reward equals the current estimate
    push_vector(
        &mut agent,
        Experience { s: vec![2.0], a: 0, r: 1.1, s_next: vec![0.0], done: true, a_next: None },
    );
    let before = agent.online().param_checksum();
    let loss = agent.train_step(&mut Rng::new(0)).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(agent.online().param_checksum(), before);
}

#[test]
fn single_sample_update_matches_hand_computation() {
    let cfg = AgentConfig { learning_rate: 0.01, decay: 0.9, epsilon_opt: 1e-3, gamma: 0.99, copy_period: 1000, ..frozen_config() };
    let w = vec![vec![0.2, -0.3], vec![0.4, 0.1]];
    let b = vec![0.05, -0.02];
    let mut agent = linear_agent(DeepAlgorithm::Dqn, cfg.clone(), w.clone(), b.clone());
    let (s, s2, r) = ([1.0, 2.0], [0.5, -1.0], 1.0);
    push_vector(&mut agent, Experience { s: s.to_vec(), a: 0, r, s_next: s2.to_vec(), done: false, a_next: None });
    agent.train_step(&mut Rng::new(0)).unwrap();

    let q = |row: usize, x: &[f64]| w[row][0] * x[0] + w[row][1] * x[1] + b[row];
    let y = r + cfg.gamma * q(0, &s2).max(q(1, &s2));
    let err = 2.0 * (q(0, &s) - y);
    let step = |p: f64, g: f64| p - cfg.learning_rate * g / ((1.0 - cfg.decay) * g * g + cfg.epsilon_opt).sqrt();
    let Layer::Dense(d) = &agent.online().layers()[0] else { panic!() };
    for c in 0..2 {
        assert!((d.weights.get(0, c) - step(w[0][c], err * s[c])).abs() < 1e-15);
        assert_eq!(d.weights.get(1, c), w[1][c]);
    }
    assert!((d.bias.get(0, 0) - step(b[0], err)).abs() < 1e-15);
    assert_eq!(d.bias.get(1, 0), b[1]);
}

#[test]
fn target_network_is_stale_between_clones() {
    let cfg = AgentConfig { copy_period: 3, learning_rate: 0.1, ..frozen_config() };
    let mut agent = linear_agent(DeepAlgorithm::Dqn, cfg, vec![vec![0.5], vec![-1.0]], vec![0.0, 0.0]);
    push_vector(&mut agent, Experience { s: vec![1.0], a: 1, r: 3.0, s_next: vec![2.0], done: false, a_next: None });
    let frozen = agent.target().param_checksum();
    let mut rng = Rng::new(0);
    for _ in 0..2 {
        agent.train_step(&mut rng).unwrap();
        assert_eq!(agent.target().param_checksum(), frozen);
        assert_ne!(agent.online().param_checksum(), frozen);
    }
    agent.train_step(&mut rng).unwrap();
    assert_eq!(agent.target().param_checksum(), agent.online().param_checksum());
}

#[test]
fn copy_period_one_clones_every_step() {
    let cfg = AgentConfig { copy_period: 1, learning_rate: 0.1, ..frozen_config() };
    let mut agent = linear_agent(DeepAlgorithm::Dqn, cfg, vec![vec![0.5], vec![-1.0]], vec![0.0, 0.0]);
    push_vector(&mut agent, Experience { s: vec![1.0], a: 1, r: 3.0, s_next: vec![2.0], done: false, a_next: None });
    let mut rng = Rng::new(0);
    for _ in 0..3 {
        agent.train_step(&mut rng).unwrap();
        assert_eq!(agent.target().param_checksum(), agent.online().param_checksum());
    }
}

#[test]
fn training_before_replay_start_fails() {
    let cfg = AgentConfig { replay_start: 40, ..AgentConfig::classic() };
    let mut agent = DeepAgent::new(DeepAlgorithm::Dqn, cfg, make_env("cartpole", 0).unwrap().spec(), &mut Rng::new(0)).unwrap();
    assert!(matches!(agent.train_step(&mut Rng::new(0)), Err(Error::Contract(_))));
}

fn stored_rewards(agent: &DeepAgent) -> Vec<f64> {
    let Memory::Vector(buf) = agent.memory() else { panic!() };
    buf.iter().map(|e| e.r).collect()
}

#[test]
fn early_termination_penalty() {
    let cfg = AgentConfig { training_penalty: -200.0, replay_start: 32, ..AgentConfig::classic() };
    let mut agent = linear_agent(DeepAlgorithm::Dqn, cfg, vec![vec![0.0], vec![0.0]], vec![0.0, 0.0]);
    let mut env = Scripted::new(0.0, 1, 10, vec![0.0]);
    let stats = agent.run_episode(&mut env, &mut Rng::new(0)).unwrap();
    assert_eq!(stats.reward, 0.0);
    assert_eq!(stored_rewards(&agent), vec![-200.0]);

    // reaching the step limit is not penalised
    let mut env = Scripted::new(0.0, 100, 3, vec![1.0]);
    agent.run_episode(&mut env, &mut Rng::new(0)).unwrap();
    assert_eq!(&stored_rewards(&agent)[1..], &[1.0, 1.0, 1.0]);
}

#[test]
fn zero_penalty_stores_env_reward() {
    let cfg = AgentConfig { replay_start: 32, ..AgentConfig::classic() };
    let mut agent = linear_agent(DeepAlgorithm::Dqn, cfg, vec![vec![0.0], vec![0.0]], vec![0.0, 0.0]);
    let mut env = Scripted::new(0.0, 4, 10, vec![0.5, -2.0, 3.0]);
    let stats = agent.run_episode(&mut env, &mut Rng::new(0)).unwrap();
    assert_eq!(stored_rewards(&agent), vec![0.5, -2.0, 3.0, 0.5]);
    assert_eq!(stats.reward, 2.0);
}

#[test]
fn rewards_are_clipped_when_configured() {
    let cfg = AgentConfig { reward_clip: Some(1.0), replay_start: 32, ..AgentConfig::classic() };
    let mut agent = linear_agent(DeepAlgorithm::Dqn, cfg, vec![vec![0.0], vec![0.0]], vec![0.0, 0.0]);
    let mut env = Scripted::new(0.0, 5, 10, vec![5.0, -3.0, 0.0, 0.4, -7.0]);
    let stats = agent.run_episode(&mut env, &mut Rng::new(0)).unwrap();
    assert_eq!(stored_rewards(&agent), vec![1.0, -1.0, 0.0, 0.4, -1.0]);
    assert_eq!(stats.reward, -4.6);
}

#[test]
fn sarsa_trace_matches_hand_trace() {
    // Q0 = -x, Q1 = x: greedy moves away from zero
    let agent_cfg = AgentConfig { replay_start: 1, ..frozen_config() };
    let mut agent = linear_agent(DeepAlgorithm::Dsn, agent_cfg, vec![vec![-1.0], vec![1.0]], vec![0.0, 0.0]);
    let mut env = Scripted::new(0.5, 3, 10, vec![1.0, 2.0, 3.0]);
    let mut rng = Rng::new(7);
    let first = rng.clone().below(2);
    agent.run_episode_dsn(&mut env, &mut rng).unwrap();
    // hand trace: first action random (empty memory), greedy afterwards
    let mut expected = Vec::new();
    let (mut x, mut a) = (0.5, first);
    for (t, r) in [1.0, 2.0, 3.0].into_iter().enumerate() {
        let x2 = x + if a == 1 { 1.0 } else { -1.0 };
        let done = t == 2;
        let a2 = (!done).then(|| usize::from(x2 > 0.0));
        expected.push((vec![x], a, r, vec![x2], a2, done));
        x = x2;
        if let Some(n) = a2 {
            a = n;
        }
    }
    let Memory::Vector(buf) = agent.memory() else { panic!() };
    let got: Vec<_> = buf.iter().map(|e| (e.s.clone(), e.a, e.r, e.s_next.clone(), e.a_next, e.done)).collect();
    assert_eq!(got, expected);
    assert!(agent.run_episode_dqn(&mut env, &mut rng).is_err());
}

#[test]
fn linear_controller_balances_cartpole() {
    let cfg = AgentConfig { eval_epsilon: 0.0, ..AgentConfig::classic() };
    let agent = linear_agent(DeepAlgorithm::Dqn, cfg, vec![vec![0.0; 4], vec![0.0, 0.0, 1.0, 0.5]], vec![0.0, 0.0]);
    let mut env = make_env("cartpole", 3).unwrap();
    assert_eq!(agent.eval_episode(env.as_mut(), &mut Rng::new(0)).unwrap(), 500.0);
}

#[test]
fn eval_is_deterministic_and_frozen() {
    let spec = make_env("cartpole", 0).unwrap().spec().clone();
    let agent = DeepAgent::new(DeepAlgorithm::Dqn, AgentConfig::classic(), &spec, &mut Rng::new(1)).unwrap();
    let before = agent.online().param_checksum();
    let run = || {
        let mut env = make_env("cartpole", 11).unwrap();
        let mut rng = Rng::new(5);
        (0..5).map(|_| agent.eval_episode(env.as_mut(), &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
    assert_eq!(agent.online().param_checksum(), before);
}

#[test]
fn pixel_agent_repeats_actions() {
    let arch = Architecture {
        input: InputShape::Image(crate::network::ImageShape { channels: 4, height: 84, width: 84 }),
        layers: vec![
            LayerSpec::Conv { filters: 2, kernel: (12, 12), stride: 12, padding: 0, activation: ActivationKind::ReLU },
            LayerSpec::Dense { units: 3, activation: ActivationKind::Linear },
        ],
    };
    let cfg = AgentConfig {
        replay_capacity: 64,
        replay_start: 8,
        minibatch: 4,
        copy_period: 5,
        ..AgentConfig::pixel()
    };
    let mut agent = DeepAgent::with_architecture(DeepAlgorithm::Dqn, cfg, arch, &mut Rng::new(0)).unwrap();
    let mut env = Blinker {
        spec: EnvSpec {
            name: "blinker".into(),
            observation: ObservationSpace::Frame { height: 8, width: 8, channels: 3 },
            action_count: 3,
            max_steps: 30,
            rewards: vec![],
        },
        steps: 0,
    };
    let mut rng = Rng::new(1);
    for _ in 0..3 {
        let stats = agent.run_episode(&mut env, &mut rng).unwrap();
        // 7 full repeats and a final repeat cut short at the step limit
        assert_eq!((stats.env_steps, stats.decisions, stats.reward), (30, 8, 30.0));
    }
    let Memory::Frames(ring) = agent.memory() else { panic!() };
    assert_eq!(ring.len(), 24);
    assert_eq!((0..7).map(|t| ring.reward(t)).collect::<Vec<_>>(), vec![4.0; 7]);
    assert_eq!((ring.reward(7), ring.done(7)), (2.0, true));
    assert!(agent.global_step > 0);
    assert_eq!(agent.frames, 90);
}

#[test]
fn feedback_alignment_rejected_for_pixels() {
    let cfg = AgentConfig { backend: crate::network::Backend::Dfa, ..AgentConfig::pixel() };
    let spec = make_env("pixel_catch", 0).unwrap().spec().clone();
    assert!(matches!(
        DeepAgent::new(DeepAlgorithm::Dqn, cfg, &spec, &mut Rng::new(0)),
        Err(Error::Architecture(_))
    ));
}

#[test]
fn snapshot_round_trip_and_env_check() {
    let spec = make_env("acrobot", 0).unwrap().spec().clone();
    let agent = DeepAgent::new(DeepAlgorithm::Dsn, AgentConfig::classic(), &spec, &mut Rng::new(2)).unwrap();
    let restored = DeepAgent::from_snapshot(agent.snapshot()).unwrap();
    assert_eq!(restored.snapshot(), agent.snapshot());
    assert!(restored.check_env(&spec).is_ok());
    let cp = make_env("cartpole", 0).unwrap();
    assert!(matches!(restored.check_env(cp.spec()), Err(Error::Architecture(_))));
}
