mod common;

use std::collections::{BTreeSet, VecDeque};

use drl_lab::agents::{AgentConfig, DeepAgent, DeepAlgorithm, Memory};
use drl_lab::environments::{make_env, Acrobot, CartPole, Environment, GridLayout, GridWorld, MountainCar};
use drl_lab::harness::{running_average, AgentKind, RunConfig};
use drl_lab::network::{
    clone_params, conv_forward, conv_output_dim, rmsprop_step, Architecture, Backend, ConvLayer, Gradients,
    ImageBatch, Network, OptState, ParamGrad, Tensor,
};
use drl_lab::numerics::{affine, xavier_init, xavier_scale, ActivationKind, Matrix, Rng, TRUNCATION};
use drl_lab::replay::{Experience, FrameRingBuffer, TransitionBuffer};
use drl_lab::stats::{inverse_normal_cdf, normal_cdf, univariate, wilcoxon_signed_rank};
use drl_lab::tabular::{epsilon_greedy, QTable};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform_range(-2.0, 2.0)).collect()).unwrap()
}

fn bits(m: &Matrix) -> Vec<u64> {
    m.data().iter().map(|v| v.to_bits()).collect()
}

// numerics

proptest! {
    #[test]
    fn affine_is_linear(seed in any::<u64>(), out in 1usize..6, inp in 1usize..6, batch in 1usize..5) {
        let mut rng = Rng::new(seed);
        let w = matrix(out, inp, &mut rng);
        let b = matrix(out, 1, &mut rng);
        let x1 = matrix(inp, batch, &mut rng);
        let x2 = matrix(inp, batch, &mut rng);
        let zero_x = Matrix::zeros(inp, batch);
        let zero_b = Matrix::zeros(out, 1);
        let sum = x1.add(&x2).unwrap();
        let lhs = affine(&w, &sum, &b).unwrap().add(&affine(&w, &zero_x, &b).unwrap()).unwrap();
        let rhs = affine(&w, &x1, &b).unwrap().add(&affine(&w, &x2, &b).unwrap()).unwrap();
        let split = affine(&w, &x1, &b).unwrap().add(&affine(&w, &x2, &zero_b).unwrap()).unwrap();
        let whole = affine(&w, &sum, &b).unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data()).chain(whole.data().iter().zip(split.data())) {
            prop_assert!((l - r).abs() <= 1e-12, "{l} vs {r}");
        }
    }

    #[test]
    fn xavier_is_seeded_and_truncated(seed in any::<u64>(), fan_in in 1usize..80, fan_out in 1usize..80) {
        let a = xavier_init(fan_in, fan_out, &mut Rng::new(seed));
        let b = xavier_init(fan_in, fan_out, &mut Rng::new(seed));
        prop_assert_eq!(bits(&a), bits(&b));
        prop_assert_eq!(a.shape(), (fan_out, fan_in));
        let bound = TRUNCATION * xavier_scale(fan_in, fan_out);
        prop_assert!(a.data().iter().all(|v| v.abs() <= bound));
    }
}

#[test]
fn activation_derivatives_match_central_differences() {
    let h = 1e-5;
    for kind in ActivationKind::ALL {
        for z in [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0] {
            let fd = (kind.apply(z + h) - kind.apply(z - h)) / (2.0 * h);
            assert!((fd - kind.derivative(z)).abs() < 1e-6, "{kind:?} at {z}");
        }
    }
}

#[test]
fn rng_sequences_repeat_bit_for_bit() {
    for seed in [0u64, 1, 42, u64::MAX] {
        let (mut a, mut b) = (Rng::new(seed), Rng::new(seed));
        for _ in 0..10_000 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }
}

// network

fn dense_net(seed: u64, backend: Backend) -> Network {
    let arch = Architecture::dense(3, &[(5, ActivationKind::Tanh), (4, ActivationKind::ReLU)], 2);
    Network::new(arch, backend, &mut Rng::new(seed)).unwrap()
}

fn random_grads(net: &Network, rng: &mut Rng) -> Gradients {
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            l.params().map(|(w, b)| ParamGrad {
                dw: matrix(w.rows(), w.cols(), rng),
                db: matrix(b.rows(), b.cols(), rng),
            })
        })
        .collect();
    Gradients { layers, deltas: vec![None; net.layers().len()] }
}

proptest! {
    #[test]
    fn rmsprop_accumulator_has_closed_form(seed in any::<u64>(), steps in 1usize..25, beta in 0.0f64..0.999) {
        let mut rng = Rng::new(seed);
        let mut net = dense_net(seed, Backend::Bp);
        let mut opt = OptState::new(&net, beta, 1e-3);
        let history: Vec<Gradients> = (0..steps).map(|_| random_grads(&net, &mut rng)).collect();
        for g in &history {
            rmsprop_step(&mut net, g, &mut opt, 1e-3).unwrap();
        }
        for (l, acc) in opt.accumulators.iter().enumerate() {
            let (pw, _) = acc.as_ref().unwrap();
            for i in 0..pw.data().len() {
                let closed: f64 = history
                    .iter()
                    .enumerate()
                    .map(|(k, g)| {
                        let gk = g.layers[l].as_ref().unwrap().dw.data()[i];
                        beta.powi((steps - 1 - k) as i32) * (1.0 - beta) * gk * gk
                    })
                    .sum();
                prop_assert!((pw.data()[i] - closed).abs() <= 1e-12, "layer {l} [{i}]: {} vs {closed}", pw.data()[i]);
            }
        }
    }

    #[test]
    fn cloning_twice_equals_cloning_once(a in any::<u64>(), b in any::<u64>()) {
        let source = dense_net(a, Backend::Dfa);
        let mut once = dense_net(b, Backend::Dfa);
        clone_params(&source, &mut once).unwrap();
        let mut twice = once.clone();
        clone_params(&source, &mut twice).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(once.param_checksum(), source.param_checksum());
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>(), batch in 1usize..6) {
        let net = dense_net(seed, Backend::Bp);
        let x = Tensor::Flat(matrix(3, batch, &mut Rng::new(seed ^ 1)));
        let a = net.predict(&x).unwrap();
        let b = net.clone().forward(&x).unwrap().0;
        prop_assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn conv_dimensions_count_kernel_placements() {
    for dim in 1..=12 {
        for k in 1..=dim + 4 {
            for s in 1..=4 {
                for p in 0..=2 {
                    let expected = common::placements(dim, k, s, p);
                    let got = conv_output_dim(dim, k, s, p).unwrap_or(0);
                    assert_eq!(got, expected, "dim {dim} k {k} s {s} p {p}");
                }
            }
        }
    }
    let mut rng = Rng::new(9);
    for dim in [3usize, 7, 12] {
        for (k, s, p) in [(3usize, 1usize, 0usize), (3, 2, 1), (2, 2, 0), (1, 3, 2)] {
            let layer = ConvLayer::new(2, 1, (k, k), s, p, ActivationKind::Linear, &mut rng);
            let input = ImageBatch::zeros(1, 1, dim, dim);
            let (out, _) = conv_forward(&layer, &input).unwrap();
            let side = common::placements(dim, k, s, p);
            assert_eq!((out.dims().height, out.dims().width), (side, side));
        }
    }
}

// environments

/// Moves within a grid as the oracle understands it.
fn oracle_move(layout: &GridLayout, cell: (usize, usize), action: usize) -> (usize, usize) {
    let (r, c) = (cell.0 as isize, cell.1 as isize);
    let (r, c) = match action {
        0 => (r - 1, c),
        1 => (r + 1, c),
        2 => (r, c - 1),
        _ => (r, c + 1),
    };
    if r < 0 || c < 0 || r >= layout.height as isize || c >= layout.width as isize {
        return cell;
    }
    let next = (r as usize, c as usize);
    if layout.walls.contains(&next) {
        cell
    } else {
        next
    }
}

proptest! {
    #[test]
    fn gridworld_return_replays_from_the_trajectory(cliff in any::<bool>(), actions in prop::collection::vec(0usize..4, 1..300)) {
        let layout = if cliff { GridLayout::cliff_walker() } else { GridLayout::maze_runner() };
        let mut env = GridWorld::new(layout.clone()).unwrap();
        env.reset(None);
        let (mut total, mut expected, mut cell) = (0.0, 0.0, layout.start);
        for &a in &actions {
            let step = env.step(a).unwrap();
            total += step.reward;
            cell = oracle_move(&layout, cell, a);
            expected += layout.terminals.get(&cell).copied().unwrap_or(layout.step_penalty);
            prop_assert_eq!(env.position(), cell);
            if step.done {
                break;
            }
        }
        prop_assert!((total - expected).abs() < 1e-9, "{total} vs {expected}");
    }

    #[test]
    fn classic_control_episodes_stop_by_500(seed in any::<u64>(), which in 0usize..3) {
        let mut env: Box<dyn Environment> = match which {
            0 => Box::new(MountainCar::new(seed)),
            1 => Box::new(Acrobot::new(seed)),
            _ => Box::new(CartPole::new(seed)),
        };
        let mut rng = Rng::new(seed);
        env.reset(None);
        let actions = env.spec().action_count;
        let mut steps = 0;
        loop {
            let s = env.step(rng.below(actions)).unwrap();
            steps += 1;
            if s.done {
                break;
            }
            prop_assert!(steps < 500);
        }
        prop_assert!(steps <= 500);
    }

    #[test]
    fn mountaincar_null_action_does_not_gain_energy(seed in any::<u64>()) {
        let mut env = MountainCar::new(seed);
        env.reset(None);
        let (x, v) = env.state();
        let mut previous = MountainCar::energy(x, v);
        for _ in 0..499 {
            let s = env.step(1).unwrap();
            let (x, v) = env.state();
            let e = MountainCar::energy(x, v);
            prop_assert!(e <= previous + 1e-6, "energy rose from {previous} to {e}");
            previous = e;
            if s.done {
                break;
            }
        }
    }
}

#[test]
fn bfs_shortest_paths() {
    for (layout, expected) in [(GridLayout::maze_runner(), 5), (GridLayout::cliff_walker(), 13)] {
        let stops: BTreeSet<_> = layout.terminals.keys().copied().collect();
        let d = common::bfs(layout.height, layout.width, &layout.walls, &stops, layout.start, layout.goal);
        assert_eq!(d, Some(expected), "{}", layout.name);
        assert_eq!(layout.shortest_path(layout.goal), Some(expected));
    }
}

// tabular

proptest! {
    #[test]
    fn step_size_is_alpha0_over_visit_count(alpha0 in 0.01f64..1.0, targets in prop::collection::vec(-10.0f64..10.0, 1..40)) {
        let mut q = QTable::new(2, 2);
        for (k, &t) in targets.iter().enumerate() {
            let before = q.get(1, 0);
            q.update(1, 0, t, alpha0);
            let k = (k + 1) as f64;
            let expected = before + alpha0 / k * (t - before);
            prop_assert!((q.get(1, 0) - expected).abs() <= 1e-12);
        }
        prop_assert_eq!(q.count(1, 0), targets.len() as u64);
        prop_assert_eq!(q.get(0, 0), 0.0);
    }

    #[test]
    fn greedy_choice_ignores_positive_scaling(row in prop::collection::vec(-50i32..50, 1..8), scale in 1u32..64, seed in any::<u64>()) {
        let base: Vec<f64> = row.iter().map(|&v| v as f64 / 4.0).collect();
        let scaled: Vec<f64> = base.iter().map(|v| v * scale as f64 / 8.0).collect();
        let (mut a, mut b) = (Rng::new(seed), Rng::new(seed));
        for _ in 0..20 {
            prop_assert_eq!(epsilon_greedy(&base, 0.0, &mut a).unwrap(), epsilon_greedy(&scaled, 0.0, &mut b).unwrap());
        }
    }
}

// replay

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sampled_frame_indices_pass_the_oracle(
        capacity in 5usize..40,
        pushes in 5usize..200,
        done_rate in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let mut ring = FrameRingBuffer::new(capacity, 1, 2);
        let mut log = common::PushLog::new(capacity);
        for i in 0..pushes {
            let done = rng.bernoulli(done_rate);
            ring.push(&[i as f32, 0.5], 0, 0.0, done).unwrap();
            log.push(done);
        }
        let expected: Vec<usize> = (0..capacity).filter(|&t| log.valid(t)).collect();
        prop_assert_eq!(ring.valid_indices(), expected.clone());
        match ring.sample_states(64, &mut rng) {
            Ok(batch) => prop_assert!(batch.indices.iter().all(|&t| log.valid(t))),
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn transition_ring_evicts_oldest_first(capacity in 1usize..20, pushes in 0usize..80) {
        let mut buf = TransitionBuffer::new(capacity);
        let mut model = VecDeque::new();
        for i in 0..pushes {
            buf.push(Experience { s: i, a: 0, r: 0.0, s_next: i + 1, done: false, a_next: None });
            model.push_back(i);
            if model.len() > capacity {
                model.pop_front();
            }
        }
        let stored: Vec<usize> = buf.iter().map(|e| e.s).collect();
        prop_assert_eq!(stored, model.into_iter().collect::<Vec<_>>());
    }
}

#[test]
fn every_valid_frame_index_gets_sampled() {
    let mut rng = Rng::new(4);
    let mut ring = FrameRingBuffer::new(16, 1, 1);
    let mut log = common::PushLog::new(16);
    for i in 0..43 {
        let done = i % 7 == 6;
        ring.push(&[i as f32], 0, 0.0, done).unwrap();
        log.push(done);
    }
    let valid: Vec<usize> = (0..16).filter(|&t| log.valid(t)).collect();
    assert!(!valid.is_empty());
    let mut hits = vec![0u64; 16];
    for _ in 0..1000 {
        for t in ring.sample_states(1000, &mut rng).unwrap().indices {
            hits[t] += 1;
        }
    }
    for t in 0..16 {
        assert_eq!(hits[t] > 0, valid.contains(&t), "slot {t}: {} hits", hits[t]);
    }
}

// agents

fn small_agent(seed: u64, copy_period: u64) -> DeepAgent {
    let config = AgentConfig { minibatch: 4, replay_start: 4, replay_capacity: 64, copy_period, ..AgentConfig::classic() };
    let arch = Architecture::dense(3, &[(5, ActivationKind::Tanh)], 3);
    DeepAgent::with_architecture(DeepAlgorithm::Dqn, config, arch, &mut Rng::new(seed)).unwrap()
}

fn fill(agent: &mut DeepAgent, action: impl Fn(usize) -> usize, rng: &mut Rng) {
    let Memory::Vector(buf) = agent.memory_mut() else { panic!("vector memory expected") };
    for i in 0..16 {
        let s: Vec<f64> = (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let s_next: Vec<f64> = (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        buf.push(Experience { s, a: action(i), r: rng.uniform(), s_next, done: i % 5 == 4, a_next: None });
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unchosen_actions_receive_no_update(seed in any::<u64>(), chosen in 0usize..3) {
        let mut rng = Rng::new(seed);
        let mut agent = small_agent(seed, 1000);
        fill(&mut agent, |_| chosen, &mut rng);
        let head = |a: &DeepAgent| {
            let (w, b) = a.online().layers()[1].params().unwrap();
            (w.clone(), b.clone())
        };
        let (w0, b0) = head(&agent);
        agent.train_step(&mut rng).unwrap();
        let (w1, b1) = head(&agent);
        for a in (0..3).filter(|&a| a != chosen) {
            prop_assert_eq!(w0.row(a), w1.row(a));
            prop_assert_eq!(b0.get(a, 0).to_bits(), b1.get(a, 0).to_bits());
        }
        prop_assert!(w0.row(chosen) != w1.row(chosen));
    }

    #[test]
    fn target_network_only_changes_on_copy(seed in any::<u64>(), period in 1u64..6) {
        let mut rng = Rng::new(seed);
        let mut agent = small_agent(seed, period);
        fill(&mut agent, |i| i % 3, &mut rng);
        let mut target = agent.target().param_checksum();
        for step in 1..=15u64 {
            agent.train_step(&mut rng).unwrap();
            let now = agent.target().param_checksum();
            if step % period == 0 {
                prop_assert_eq!(&now, &agent.online().param_checksum());
                target = now;
            } else {
                prop_assert_eq!(&now, &target);
            }
        }
    }

    #[test]
    fn frozen_evaluation_repeats_given_a_seed(seed in any::<u64>()) {
        let env = make_env("cartpole", 0).unwrap();
        let agent = DeepAgent::new(DeepAlgorithm::Dsn, AgentConfig::classic(), env.spec(), &mut Rng::new(seed)).unwrap();
        let before = agent.snapshot();
        let run = || {
            let mut env = make_env("cartpole", seed).unwrap();
            let mut rng = Rng::new(seed);
            (0..3).map(|_| agent.eval_episode(env.as_mut(), &mut rng).unwrap()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
        prop_assert_eq!(agent.snapshot(), before);
    }
}

// stats

proptest! {
    #[test]
    fn integer_summaries_match_exact_arithmetic(data in prop::collection::vec(-10_000i64..10_000, 2..1000)) {
        let xs: Vec<f64> = data.iter().map(|&v| v as f64).collect();
        let s = univariate(&xs).unwrap();
        let n = data.len() as i128;
        let sum: i128 = data.iter().map(|&v| v as i128).sum();
        let sq: i128 = data.iter().map(|&v| (v as i128) * (v as i128)).sum();
        prop_assert!((s.mean - sum as f64 / n as f64).abs() <= 1e-12 * (1.0 + s.mean.abs()));
        let var = (n * sq - sum * sum) as f64 / (n * (n - 1)) as f64;
        prop_assert!((s.std - var.sqrt()).abs() <= 1e-9 * (1.0 + var.sqrt()));
        let mut sorted = data.clone();
        sorted.sort();
        let m = data.len();
        let median2 = if m % 2 == 1 { 2 * sorted[m / 2] } else { sorted[m / 2 - 1] + sorted[m / 2] };
        prop_assert_eq!(s.median, median2 as f64 / 2.0);
    }

    #[test]
    fn skewness_flips_sign_and_kurtosis_is_affine_invariant(
        data in prop::collection::vec(-100.0f64..100.0, 3..200),
        a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        b in -50.0f64..50.0,
    ) {
        let s = univariate(&data).unwrap();
        prop_assume!(s.skewness.is_some());
        let neg: Vec<f64> = data.iter().map(|v| -v).collect();
        let mapped: Vec<f64> = data.iter().map(|v| a * v + b).collect();
        let sn = univariate(&neg).unwrap();
        let sm = univariate(&mapped).unwrap();
        prop_assert_eq!(sn.skewness.unwrap(), -s.skewness.unwrap());
        prop_assert_eq!(sn.kurtosis, s.kurtosis);
        let (k, km) = (s.kurtosis.unwrap(), sm.kurtosis.unwrap());
        prop_assert!((k - km).abs() <= 1e-9 * k, "{k} vs {km}");
    }

    #[test]
    fn wilcoxon_is_symmetric_in_its_arguments(pairs in prop::collection::vec((-5i32..5, -5i32..5), 1..40)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let xy = wilcoxon_signed_rank(&x, &y).unwrap();
        let yx = wilcoxon_signed_rank(&y, &x).unwrap();
        prop_assert_eq!(xy.p_value.to_bits(), yx.p_value.to_bits());
        prop_assert_eq!(xy.h, yx.h);
    }

    #[test]
    fn exact_wilcoxon_matches_sign_flip_enumeration(pairs in prop::collection::vec((0u8..6, 0u8..6), 1..=12)) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        let diffs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
        if diffs.is_empty() {
            prop_assert_eq!(r.p_value, 1.0);
        } else {
            let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
            let ranks = common::midranks_by_counting(&abs);
            let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
            let oracle = common::sign_flip_p_min_tail(&ranks, w_plus);
            prop_assert!((r.p_value - oracle).abs() <= 1e-12, "{} vs {oracle}", r.p_value);
        }
    }

    #[test]
    fn inverse_normal_cdf_inverts_the_cdf(p in 0.001f64..0.999) {
        prop_assert!((normal_cdf(inverse_normal_cdf(p)) - p).abs() <= 1e-10);
    }
}

// harness

proptest! {
    #[test]
    fn running_average_is_the_trailing_mean(values in prop::collection::vec(-500i32..500, 0..300), window in 1usize..120) {
        let xs: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let avg = running_average(&xs, window);
        prop_assert_eq!(avg.len(), xs.len());
        for k in 0..xs.len() {
            let lo = (k + 1).saturating_sub(window);
            let sum: i64 = values[lo..=k].iter().map(|&v| v as i64).sum();
            let expected = sum as f64 / (k + 1 - lo) as f64;
            prop_assert!((avg[k] - expected).abs() <= 1e-9, "k {k}: {} vs {expected}", avg[k]);
        }
    }

    #[test]
    fn run_names_carry_every_identifying_field(seed in any::<u64>(), which in 0usize..4, softmax in any::<bool>(), dfa in any::<bool>()) {
        let kind = AgentKind::ALL[which];
        let env = if kind.tabular().is_some() { "cliff_walker" } else { "acrobot" };
        let mut cfg = RunConfig::new(env, kind, seed).unwrap();
        if softmax {
            cfg = cfg.with_policy(drl_lab::tabular::Policy::Softmax);
        }
        if dfa && kind.deep().is_some() {
            cfg = cfg.with_backend(Backend::Dfa);
        }
        let name = cfg.run_name();
        prop_assert!(name.starts_with(env));
        prop_assert!(name.contains(&kind.to_string()));
        prop_assert!(name.contains(&cfg.backend.to_string()));
        prop_assert!(name.contains(&cfg.policy.to_string()));
        let suffix = format!("seed{}", seed);
        prop_assert!(name.ends_with(&suffix));
    }
}
