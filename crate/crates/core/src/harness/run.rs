use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainedAgent};
use super::config::{RunConfig, RUNNING_WINDOW};
use crate::agents::DeepAgent;
use crate::environments::{make_env, Environment, Observation};
use crate::error::{contract, Error, Result};
use crate::numerics::Rng;
use crate::stats::{histogram, qq_points, univariate, HistogramBin, UnivariateSummary};
use crate::tabular::{argmax_first, train_tabular};

pub const HISTOGRAM_BINS: usize = 20;

// Stream ids keep training, periodic and final evaluation draws apart.
const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const FINAL_STREAM: u64 = 3;
const BASELINE_STREAM: u64 = 4;
const RESUME_STREAM: u64 = 1 << 32;

pub const TRAINING_CSV_HEADER: &str = "episode,reward,running_avg";
pub const EVAL_CSV_HEADER: &str = "episode,mean,std";

/// Frozen evaluation taken during training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEval {
    /// Training episodes completed before the evaluation.
    pub episode: usize,
    pub mean: f64,
    pub std: f64,
}

/// Post-training evaluation block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEval {
    pub rewards: Vec<f64>,
    /// Absent for fewer than two episodes.
    pub summary: Option<UnivariateSummary>,
    pub histogram: Vec<HistogramBin>,
    pub qq: Vec<(f64, f64)>,
    /// Uniform-random policy over the same number of episodes.
    pub random_mean: f64,
    pub random_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_name: String,
    pub config: RunConfig,
    /// Total reward of every training episode.
    pub rewards: Vec<f64>,
    pub running_average: Vec<f64>,
    /// Largest Q-table change per episode (tabular runs only).
    pub deltas: Vec<f64>,
    pub during: Vec<CheckpointEval>,
    pub final_eval: Option<FinalEval>,
    /// Position by final-eval mean among compared runs, 1 for the best.
    pub rank: Option<usize>,
    /// Training episode a resumed run restarted from.
    pub resumed_from: Option<usize>,
}

impl EvalReport {
    fn empty(cfg: &RunConfig) -> Self {
        Self {
            run_name: cfg.run_name(),
            config: cfg.clone(),
            rewards: vec![],
            running_average: vec![],
            deltas: vec![],
            during: vec![],
            final_eval: None,
            rank: None,
            resumed_from: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{} is not a report: {e}", path.display())))
    }
}

/// Mean of the last `min(k, window)` values for every prefix length `k`.
pub fn running_average(values: &[f64], window: usize) -> Vec<f64> {
    (1..=values.len()).map(|k| window_mean(&values[k.saturating_sub(window)..k])).collect()
}

fn window_mean(tail: &[f64]) -> f64 {
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Mean and sample standard deviation; the deviation is 0 below two values
/// and both are 0 for no values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    match univariate(values) {
        Ok(s) => (s.mean, s.std),
        Err(_) => (values[0], 0.0),
    }
}

/// Frozen episodes of `agent` on a fresh `env_name` seeded with `seed`.
pub fn evaluate(agent: &TrainedAgent, env_name: &str, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    eval_with_stream(agent, env_name, episodes, seed, EVAL_STREAM)
}

fn eval_with_stream(agent: &TrainedAgent, env_name: &str, episodes: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
    let mut env = make_env(env_name, seed)?;
    agent.check_env(env.spec())?;
    let mut rng = Rng::with_stream(seed, stream);
    match agent {
        TrainedAgent::Tabular { q, .. } => (0..episodes).map(|_| greedy_episode(env.as_mut(), q)).collect(),
        TrainedAgent::Deep(snapshot) => {
            let deep = DeepAgent::from_snapshot(snapshot.clone())?;
            (0..episodes).map(|_| deep.eval_episode(env.as_mut(), &mut rng)).collect()
        }
    }
}

fn greedy_episode(env: &mut dyn Environment, q: &crate::tabular::QTable) -> Result<f64> {
    let state = |o: &Observation| o.as_discrete().ok_or_else(|| contract("tabular agent needs discrete states"));
    let mut s = state(&env.reset(None))?;
    let mut total = 0.0;
    loop {
        let step = env.step(argmax_first(q.row(s)))?;
        total += step.reward;
        if step.done {
            return Ok(total);
        }
        s = state(&step.observation)?;
    }
}

/// Mean and standard deviation over `episodes` frozen episodes.
pub fn evaluate_during_training(agent: &TrainedAgent, env_name: &str, episodes: usize, seed: u64) -> Result<(f64, f64)> {
    Ok(mean_std(&evaluate(agent, env_name, episodes, seed)?))
}

/// Per-episode rewards of a uniformly random policy.
pub fn random_baseline(env_name: &str, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    let mut env = make_env(env_name, seed)?;
    let mut rng = Rng::with_stream(seed, BASELINE_STREAM);
    let actions = env.spec().action_count;
    (0..episodes)
        .map(|_| {
            env.reset(None);
            let mut total = 0.0;
            loop {
                let step = env.step(rng.below(actions))?;
                total += step.reward;
                if step.done {
                    return Ok(total);
                }
            }
        })
        .collect()
}

pub fn evaluate_final(agent: &TrainedAgent, env_name: &str, episodes: usize, seed: u64) -> Result<FinalEval> {
    let rewards = eval_with_stream(agent, env_name, episodes, seed, FINAL_STREAM)?;
    final_block(rewards, episodes, env_name, seed)
}

fn final_block(rewards: Vec<f64>, episodes: usize, env_name: &str, seed: u64) -> Result<FinalEval> {
    if rewards.len() != episodes {
        return Err(contract(format!("final evaluation produced {} rewards, expected {episodes}", rewards.len())));
    }
    let (random_mean, random_std) = mean_std(&random_baseline(env_name, episodes, seed)?);
    Ok(FinalEval {
        summary: univariate(&rewards).ok(),
        histogram: if rewards.is_empty() { vec![] } else { histogram(&rewards, HISTOGRAM_BINS)? },
        qq: qq_points(&rewards).unwrap_or_default(),
        rewards,
        random_mean,
        random_std,
    })
}

/// Incrementally written training log.
struct RunLog {
    training: BufWriter<File>,
    eval: BufWriter<File>,
}

impl RunLog {
    fn create(dir: &Path, name: &str, report: &EvalReport) -> Result<Self> {
        let mut log = Self {
            training: BufWriter::new(File::create(dir.join(format!("{name}_training.csv")))?),
            eval: BufWriter::new(File::create(dir.join(format!("{name}_eval.csv")))?),
        };
        writeln!(log.training, "{TRAINING_CSV_HEADER}")?;
        writeln!(log.eval, "{EVAL_CSV_HEADER}")?;
        for (k, (r, avg)) in report.rewards.iter().zip(&report.running_average).enumerate() {
            writeln!(log.training, "{},{r},{avg}", k + 1)?;
        }
        for e in &report.during {
            writeln!(log.eval, "{},{},{}", e.episode, e.mean, e.std)?;
        }
        log.flush()?;
        Ok(log)
    }

    fn flush(&mut self) -> Result<()> {
        self.training.flush()?;
        self.eval.flush()?;
        Ok(())
    }
}

/// Paths of the files a run keeps in its directory.
pub fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir().join(format!("{}.ckpt", cfg.run_name()))
}

pub fn config_path(cfg: &RunConfig) -> PathBuf {
    cfg.run_dir().join(format!("{}_config.toml", cfg.run_name()))
}

struct Recorder<'a> {
    cfg: &'a RunConfig,
    report: EvalReport,
    log: RunLog,
    window: Vec<f64>,
}

impl Recorder<'_> {
    fn episode(&mut self, reward: f64, delta: Option<f64>) -> Result<()> {
        self.report.rewards.push(reward);
        self.window.push(reward);
        if self.window.len() > RUNNING_WINDOW {
            self.window.remove(0);
        }
        let avg = window_mean(&self.window);
        self.report.running_average.push(avg);
        if let Some(d) = delta {
            self.report.deltas.push(d);
        }
        writeln!(self.log.training, "{},{reward},{avg}", self.report.rewards.len())?;
        self.log.training.flush()?;
        Ok(())
    }

    fn due(&self) -> bool {
        let i = self.cfg.eval.interval;
        i > 0 && self.report.rewards.len() % i == 0
    }

    fn checkpoint(&mut self, agent: TrainedAgent) -> Result<()> {
        let episode = self.report.rewards.len();
        let (mean, std) = evaluate_during_training(&agent, &self.cfg.env, self.cfg.eval.episodes, self.eval_seed(episode))?;
        self.report.during.push(CheckpointEval { episode, mean, std });
        writeln!(self.log.eval, "{episode},{mean},{std}")?;
        self.log.flush()?;
        save_checkpoint(&checkpoint_path(self.cfg), &Checkpoint::new(&self.cfg.env, self.cfg.seed, episode, agent))
    }

    fn eval_seed(&self, episode: usize) -> u64 {
        self.cfg.seed ^ (episode as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Trains the agent `cfg` describes, logging every episode and evaluating
/// and checkpointing on the configured schedule. The final checkpoint is
/// written to [`checkpoint_path`]. No final evaluation is run.
pub fn run_training(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let deep = match cfg.kind.deep() {
        Some(algo) => {
            let mut init = Rng::with_stream(cfg.seed, 0);
            Some(DeepAgent::new(algo, cfg.deep.clone(), &cfg.env_spec()?, &mut init)?)
        }
        None => None,
    };
    let report = EvalReport::empty(cfg);
    match deep {
        Some(agent) => train_deep(cfg, agent, report, Rng::with_stream(cfg.seed, TRAIN_STREAM), make_env(&cfg.env, cfg.seed)?),
        None => train_table(cfg, report),
    }
}

fn start(cfg: &RunConfig, report: EvalReport) -> Result<Recorder<'_>> {
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(config_path(cfg), cfg.to_toml_string()?)?;
    let log = RunLog::create(&dir, &cfg.run_name(), &report)?;
    let window = report.rewards[report.rewards.len().saturating_sub(RUNNING_WINDOW)..].to_vec();
    Ok(Recorder { cfg, report, log, window })
}

fn train_table(cfg: &RunConfig, report: EvalReport) -> Result<EvalReport> {
    let algorithm = cfg.kind.tabular().expect("tabular kind");
    let mut env = make_env(&cfg.env, cfg.seed)?;
    let mut rng = Rng::with_stream(cfg.seed, TRAIN_STREAM);
    let mut rec = start(cfg, report)?;
    let outcome = train_tabular(env.as_mut(), &cfg.tabular, algorithm, &mut rng, |_, reward, delta, q| {
        rec.episode(reward, Some(delta))?;
        if rec.due() {
            rec.checkpoint(TrainedAgent::Tabular { algorithm, q: q.clone() })?;
        }
        Ok(())
    })?;
    let episode = rec.report.rewards.len();
    save_checkpoint(
        &checkpoint_path(cfg),
        &Checkpoint::new(&cfg.env, cfg.seed, episode, TrainedAgent::Tabular { algorithm, q: outcome.q }),
    )?;
    Ok(rec.report)
}

fn train_deep(
    cfg: &RunConfig,
    mut agent: DeepAgent,
    report: EvalReport,
    mut rng: Rng,
    mut env: Box<dyn Environment>,
) -> Result<EvalReport> {
    let mut rec = start(cfg, report)?;
    let budget = cfg.deep.max_frames;
    while rec.report.rewards.len() < cfg.deep.episodes && (budget == 0 || agent.frames < budget) {
        let stats = agent.run_episode(env.as_mut(), &mut rng)?;
        rec.episode(stats.reward, None)?;
        if rec.due() {
            rec.checkpoint(TrainedAgent::Deep(agent.snapshot()))?;
        }
    }
    let episode = rec.report.rewards.len();
    save_checkpoint(&checkpoint_path(cfg), &Checkpoint::new(&cfg.env, cfg.seed, episode, TrainedAgent::Deep(agent.snapshot())))?;
    Ok(rec.report)
}

/// Continues an interrupted deep run from its last checkpoint. Logged
/// episodes after the checkpoint are discarded and the replay memory starts
/// empty; random streams are re-derived from the seed and the episode.
pub fn resume_training(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if cfg.kind.deep().is_none() {
        return Err(Error::Config("tabular runs are not resumable; start them again".into()));
    }
    let ckpt = load_checkpoint(&checkpoint_path(cfg))?;
    let TrainedAgent::Deep(snapshot) = ckpt.agent else {
        return Err(Error::Checkpoint("checkpoint does not hold a deep agent".into()));
    };
    if ckpt.env != cfg.env || ckpt.seed != cfg.seed || snapshot.config != cfg.deep {
        return Err(Error::Checkpoint("checkpoint was written by a different configuration".into()));
    }
    let agent = DeepAgent::from_snapshot(snapshot)?;
    let name = cfg.run_name();
    let dir = cfg.run_dir();
    let mut report = EvalReport::empty(cfg);
    report.rewards = read_column(&dir.join(format!("{name}_training.csv")), 1)?;
    report.rewards.truncate(ckpt.episode);
    if report.rewards.len() != ckpt.episode {
        return Err(Error::Checkpoint("training log is shorter than the checkpoint".into()));
    }
    report.running_average = running_average(&report.rewards, RUNNING_WINDOW);
    let evals = read_rows(&dir.join(format!("{name}_eval.csv")))?;
    report.during = evals
        .into_iter()
        .filter(|r| r[0] as usize <= ckpt.episode)
        .map(|r| CheckpointEval { episode: r[0] as usize, mean: r[1], std: r[2] })
        .collect();
    report.resumed_from = Some(ckpt.episode);
    let stream = RESUME_STREAM + ckpt.episode as u64;
    let env = make_env(&cfg.env, cfg.seed ^ stream)?;
    train_deep(cfg, agent, report, Rng::with_stream(cfg.seed, stream), env)
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("bad value '{v}' in {}", path.display()))))
                .collect()
        })
        .collect()
}

fn read_column(path: &Path, col: usize) -> Result<Vec<f64>> {
    read_rows(path)?
        .into_iter()
        .map(|r| r.get(col).copied().ok_or_else(|| Error::Config(format!("short row in {}", path.display()))))
        .collect()
}

/// Training, final evaluation on the last checkpoint, and the full report.
pub fn run_experiment(cfg: &RunConfig) -> Result<EvalReport> {
    let mut report = run_training(cfg)?;
    finish(cfg, &mut report)?;
    Ok(report)
}

pub(crate) fn finish(cfg: &RunConfig, report: &mut EvalReport) -> Result<()> {
    let ckpt = load_checkpoint(&checkpoint_path(cfg))?;
    let seed = cfg.seed.wrapping_add(0x5EED);
    report.final_eval = Some(evaluate_final(&ckpt.agent, &cfg.env, cfg.eval.final_episodes, seed)?);
    super::report::emit_report(report, &cfg.run_dir())?;
    Ok(())
}

/// Resumed counterpart of [`run_experiment`].
pub fn resume_experiment(cfg: &RunConfig) -> Result<EvalReport> {
    let mut report = resume_training(cfg)?;
    finish(cfg, &mut report)?;
    Ok(report)
}
