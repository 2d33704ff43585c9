//! Experiment settings and helpers for the end-to-end acceptance checks.

use std::path::Path;

use drl_lab::agents::EpsilonSchedule;
use drl_lab::harness::{checkpoint_path, evaluate, load_checkpoint, mean_std, run_training, AgentKind, RunConfig};
use drl_lab::network::Backend;
use drl_lab::Result;

/// Frames for the pixel learning check.
pub const PIXEL_FRAME_BUDGET: u64 = 50_000;

/// Lowest possible pixel-catch episode reward: every drop missed.
pub const PIXEL_CATCH_FLOOR: f64 = -10.0;

/// CartPole DQN with the stock classical-control settings and 1000 episodes.
pub fn cartpole_config(seed: u64, backend: Backend, dir: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::new("cartpole", AgentKind::Dqn, seed)?.with_backend(backend);
    cfg.output_dir = dir.to_path_buf();
    cfg.eval.interval = 0;
    cfg.deep.episodes = 1000;
    Ok(cfg)
}

/// Pixel-catch DQN scaled to a desk budget: a 10k-frame replay ring that
/// starts training after 500 entries, a gradient step every 4 decisions at
/// learning rate 1e-3, target refresh every 250 steps, and exploration
/// annealed from 1 to 0.1 over the first 2500 decisions.
pub fn pixel_config(seed: u64, dir: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::new("pixel_catch", AgentKind::Dqn, seed)?;
    cfg.output_dir = dir.to_path_buf();
    cfg.eval.interval = 0;
    cfg.deep.learning_rate = 1e-3;
    cfg.deep.replay_capacity = 10_000;
    cfg.deep.replay_start = 500;
    cfg.deep.copy_period = 250;
    cfg.deep.train_every = 4;
    cfg.deep.max_frames = PIXEL_FRAME_BUDGET;
    cfg.deep.epsilon_schedule = EpsilonSchedule::LinearAnneal {
        initial: 1.0,
        final_value: 0.1,
        final_frame: 2_500,
    };
    Ok(cfg)
}

/// Trains `cfg`, then returns the mean reward of `episodes` frozen
/// evaluation episodes of the final checkpoint.
pub fn train_and_evaluate(cfg: &RunConfig, episodes: usize, eval_seed: u64) -> Result<f64> {
    run_training(cfg)?;
    let ckpt = load_checkpoint(&checkpoint_path(cfg))?;
    Ok(mean_std(&evaluate(&ckpt.agent, &cfg.env, episodes, eval_seed)?).0)
}

/// Whether `score` is at least `factor` times `baseline`, both measured
/// above `floor`, the lowest reward an episode can earn.
pub fn at_least_times(score: f64, baseline: f64, factor: f64, floor: f64) -> bool {
    score - floor >= factor * (baseline - floor)
}
