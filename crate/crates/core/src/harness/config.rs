use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, DeepAlgorithm};
use crate::environments::{make_env, EnvSpec, ObservationSpace};
use crate::error::{Error, Result};
use crate::network::Backend;
use crate::tabular::{Policy, TabularAlgorithm, TabularConfig};

/// Episodes in the running-average window.
pub const RUNNING_WINDOW: usize = 100;
pub const EVAL_INTERVAL: usize = 50;
pub const EVAL_EPISODES: usize = 100;
pub const FINAL_EVAL_EPISODES: usize = 1000;
/// Overrides `output_dir` when set. Nothing else is read from the environment.
pub const OUTPUT_DIR_VAR: &str = "DRL_LAB_OUTPUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    TabularQ,
    TabularSarsa,
    Dqn,
    Dsn,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::TabularQ, AgentKind::TabularSarsa, AgentKind::Dqn, AgentKind::Dsn];

    pub fn tabular(self) -> Option<TabularAlgorithm> {
        match self {
            AgentKind::TabularQ => Some(TabularAlgorithm::QLearning),
            AgentKind::TabularSarsa => Some(TabularAlgorithm::Sarsa),
            _ => None,
        }
    }

    pub fn deep(self) -> Option<DeepAlgorithm> {
        match self {
            AgentKind::Dqn => Some(DeepAlgorithm::Dqn),
            AgentKind::Dsn => Some(DeepAlgorithm::Dsn),
            _ => None,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::TabularQ => "tabular-q",
            AgentKind::TabularSarsa => "tabular-sarsa",
            AgentKind::Dqn => "dqn",
            AgentKind::Dsn => "dsn",
        })
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent kind '{s}' (expected tabular-q, tabular-sarsa, dqn or dsn)")))
    }
}

pub fn parse_backend(s: &str) -> Result<Backend> {
    match s {
        "bp" => Ok(Backend::Bp),
        "dfa" => Ok(Backend::Dfa),
        _ => Err(Error::Config(format!("unknown backend '{s}' (expected bp or dfa)"))),
    }
}

/// When frozen evaluations happen and how long they are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSchedule {
    /// Training episodes between frozen evaluations; 0 disables them.
    pub interval: usize,
    pub episodes: usize,
    pub final_episodes: usize,
}

impl Default for EvalSchedule {
    fn default() -> Self {
        Self {
            interval: EVAL_INTERVAL,
            episodes: EVAL_EPISODES,
            final_episodes: FINAL_EVAL_EPISODES,
        }
    }
}

/// Everything that determines a run. `backend` and `policy` are repeated
/// inside the agent configurations and must agree with them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    pub kind: AgentKind,
    pub backend: Backend,
    pub policy: Policy,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub eval: EvalSchedule,
    pub deep: AgentConfig,
    pub tabular: TabularConfig,
}

impl RunConfig {
    /// Defaults for `env`: the pixel settings for the pixel game, the
    /// classical ones otherwise.
    pub fn new(env: &str, kind: AgentKind, seed: u64) -> Result<Self> {
        make_env(env, seed)?;
        let deep = if env == "pixel_catch" {
            AgentConfig::pixel()
        } else {
            AgentConfig::classic()
        };
        Ok(Self {
            env: env.to_string(),
            kind,
            backend: Backend::Bp,
            policy: Policy::EpsilonGreedy,
            seed,
            output_dir: PathBuf::from("runs"),
            eval: EvalSchedule::default(),
            deep,
            tabular: TabularConfig::default(),
        })
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self.deep.backend = backend;
        self
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self.deep.policy = policy;
        self.tabular.policy = policy;
        self
    }

    /// Parses a config file. Fields left out take the defaults of
    /// [`RunConfig::new`] for the file's `env` and `kind`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e| Error::Config(format!("config is not valid TOML: {e}")))?;
        Self::from_table(user)
    }

    pub fn from_table(user: toml::Table) -> Result<Self> {
        let text = |key: &str| -> Result<Option<String>> {
            match user.get(key) {
                None => Ok(None),
                Some(toml::Value::String(s)) => Ok(Some(s.clone())),
                Some(v) => Err(Error::Config(format!("'{key}' must be a string, got {v}"))),
            }
        };
        let env = text("env")?.ok_or_else(|| Error::Config("config must name an env".into()))?;
        let kind: AgentKind = text("kind")?
            .ok_or_else(|| Error::Config("config must name an agent kind".into()))?
            .parse()?;
        let seed = match user.get("seed") {
            None => 0,
            Some(toml::Value::Integer(s)) if *s >= 0 => *s as u64,
            Some(v) => return Err(Error::Config(format!("seed must be a non-negative integer, got {v}"))),
        };
        let mut base = Self::new(&env, kind, seed)?;
        if let Some(b) = text("backend")? {
            base = base.with_backend(parse_backend(&b)?);
        }
        if let Some(p) = text("policy")? {
            base = base.with_policy(p.parse()?);
        }
        let mut merged = toml::Table::try_from(&base).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let cfg: RunConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        Ok(make_env(&self.env, self.seed)?.spec().clone())
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.env_spec()?;
        let discrete = matches!(spec.observation, ObservationSpace::Discrete { .. });
        if self.kind.tabular().is_some() != discrete {
            return Err(Error::Config(format!(
                "{} agents cannot play {} ({})",
                self.kind,
                self.env,
                if discrete { "a gridworld needs a tabular agent" } else { "tabular agents need a gridworld" }
            )));
        }
        if self.deep.backend != self.backend || self.deep.policy != self.policy || self.tabular.policy != self.policy {
            return Err(Error::Config(format!(
                "backend/policy in [deep] or [tabular] disagree with the top-level {} / {}",
                self.backend, self.policy
            )));
        }
        if self.kind.tabular().is_some() {
            if self.backend != Backend::Bp {
                return Err(Error::Config("tabular agents have no network; backend must be bp".into()));
            }
            self.tabular.validate()?;
        } else {
            self.deep.validate()?;
            if matches!(spec.observation, ObservationSpace::Frame { .. }) && self.backend == Backend::Dfa {
                return Err(Error::Config("direct feedback alignment is only supported for dense networks".into()));
            }
        }
        if self.eval.interval > 0 && self.eval.episodes == 0 {
            return Err(Error::Config("periodic evaluation needs at least one episode".into()));
        }
        Ok(())
    }

    /// Training episodes the agent configuration asks for.
    pub fn episodes(&self) -> usize {
        if self.kind.tabular().is_some() {
            self.tabular.episodes
        } else {
            self.deep.episodes
        }
    }

    /// File-name stem shared by everything the run writes.
    pub fn run_name(&self) -> String {
        format!("{}_{}_{}_{}_seed{}", self.env, self.kind, self.backend, self.policy, self.seed)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.run_name())
    }

    /// Replaces `output_dir` with the value of [`OUTPUT_DIR_VAR`], if set.
    pub fn apply_env_override(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_VAR).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }
}

/// Overlays `user` on `base`, recursing into tables. A table carrying a
/// different `kind` tag replaces the base table outright.
pub(crate) fn merge(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if b.get("kind") == u.get("kind") || !u.contains_key("kind") => {
                merge(b, u)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}
