use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::numerics::Rng;

/// Behaviour policy over a row of action values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    #[serde(rename = "egreedy", alias = "epsilongreedy", alias = "epsilon_greedy")]
    EpsilonGreedy,
    Softmax,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::EpsilonGreedy => "egreedy",
            Policy::Softmax => "softmax",
        })
    }
}

impl std::str::FromStr for Policy {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "egreedy" | "epsilon_greedy" | "epsilongreedy" => Ok(Policy::EpsilonGreedy),
            "softmax" => Ok(Policy::Softmax),
            _ => Err(crate::Error::Config(format!("unknown policy '{s}' (expected egreedy or softmax)"))),
        }
    }
}

/// Index of a maximal entry, chosen uniformly among ties.
pub fn argmax_random(q_row: &[f64], rng: &mut Rng) -> Result<usize> {
    if q_row.is_empty() {
        return Err(contract("empty action set"));
    }
    let best = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..q_row.len()).filter(|&i| q_row[i] == best).collect();
    Ok(match ties.len() {
        // all NaN: fall back to a uniform pick
        0 => rng.below(q_row.len()),
        1 => ties[0],
        n => ties[rng.below(n)],
    })
}

/// First maximal entry; deterministic, for policy extraction.
pub fn argmax_first(q_row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q_row.iter().enumerate() {
        if v > q_row[best] {
            best = i;
        }
    }
    best
}

pub fn epsilon_greedy(q_row: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
    if q_row.is_empty() {
        return Err(contract("empty action set"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(contract(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if epsilon > 0.0 && rng.uniform() < epsilon {
        return Ok(rng.below(q_row.len()));
    }
    argmax_random(q_row, rng)
}

/// Boltzmann probabilities `exp(q/xi) / sum exp(q/xi)`.
pub fn softmax_probabilities(q_row: &[f64], temperature: f64) -> Vec<f64> {
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = q_row.iter().map(|q| ((q - max) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

pub fn softmax_policy(q_row: &[f64], temperature: f64, rng: &mut Rng) -> Result<usize> {
    if q_row.is_empty() {
        return Err(contract("empty action set"));
    }
    if !(temperature > 0.0) {
        return Err(contract(format!("temperature must be positive, got {temperature}")));
    }
    let p = softmax_probabilities(q_row, temperature);
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(p.len() - 1)
}

/// Dispatches to the chosen policy; `epsilon` is ignored by softmax, which
/// runs at temperature 1.
pub fn select(policy: Policy, q_row: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
    match policy {
        Policy::EpsilonGreedy => epsilon_greedy(q_row, epsilon, rng),
        Policy::Softmax => softmax_policy(q_row, 1.0, rng),
    }
}
