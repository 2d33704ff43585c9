use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentSnapshot, DeepAgent};
use crate::environments::{EnvSpec, ObservationSpace};
use crate::error::{Error, Result};
use crate::tabular::{QTable, TabularAlgorithm};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "DRLCKPT";

/// Frozen parameters of either agent family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedAgent {
    Tabular { algorithm: TabularAlgorithm, q: QTable },
    Deep(AgentSnapshot),
}

impl TrainedAgent {
    /// Errors with [`Error::Architecture`] if the agent cannot play `spec`.
    pub fn check_env(&self, spec: &EnvSpec) -> Result<()> {
        match self {
            TrainedAgent::Tabular { q, .. } => match spec.observation {
                ObservationSpace::Discrete { states } if states == q.states() && spec.action_count == q.actions() => Ok(()),
                obs => Err(Error::Architecture(format!(
                    "Q table {}x{} cannot play {} ({obs:?}, {} actions)",
                    q.states(),
                    q.actions(),
                    spec.name,
                    spec.action_count
                ))),
            },
            TrainedAgent::Deep(s) => DeepAgent::from_snapshot(s.clone())?.check_env(spec),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub env: String,
    pub seed: u64,
    /// Training episodes completed when the checkpoint was taken.
    pub episode: usize,
    pub agent: TrainedAgent,
}

impl Checkpoint {
    pub fn new(env: &str, seed: u64, episode: usize, agent: TrainedAgent) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            env: env.to_string(),
            seed,
            episode,
            agent,
        }
    }
}

/// Writes a header line `DRLCKPT v<version> sha256=<hex>` and the JSON
/// payload the digest covers. The file is replaced atomically.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let payload = serde_json::to_string_pretty(ckpt).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let digest = hex::encode(Sha256::digest(payload.as_bytes()));
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, format!("{MAGIC} v{} sha256={digest}\n{payload}", ckpt.version))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Checkpoint(format!("{} is not text", path.display())))?;
    let (header, payload) = text
        .split_once('\n')
        .ok_or_else(|| Error::Checkpoint(format!("{} has no header line", path.display())))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(MAGIC) {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version: u32 = fields
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint("malformed version field".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let expected = fields
        .next()
        .and_then(|d| d.strip_prefix("sha256="))
        .ok_or_else(|| Error::Checkpoint("malformed checksum field".into()))?;
    let actual = hex::encode(Sha256::digest(payload.as_bytes()));
    if actual != expected {
        return Err(Error::Checkpoint(format!(
            "checksum mismatch in {} (file truncated or corrupt)",
            path.display()
        )));
    }
    let ckpt: Checkpoint = serde_json::from_str(payload).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if ckpt.version != version {
        return Err(Error::Checkpoint("header and payload versions differ".into()));
    }
    if let TrainedAgent::Deep(s) = &ckpt.agent {
        DeepAgent::from_snapshot(s.clone())?;
    }
    Ok(ckpt)
}
