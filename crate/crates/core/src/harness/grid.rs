use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{merge, RunConfig, RUNNING_WINDOW};
use super::run::run_training;
use super::svg::{line_chart, Series};
use crate::error::{contract, Error, Result};

/// A base run and the values to try for some of its fields. Parameters are
/// dotted paths into the run config, e.g. `deep.learning_rate`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub base: RunConfig,
    pub parameters: Vec<(String, Vec<toml::Value>)>,
    /// Vary one parameter at a time around the base; otherwise sweep the
    /// full cartesian product as a single comparison.
    pub one_at_a_time: bool,
    /// Seeds of the test cases every candidate is trained on.
    pub seeds: Vec<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    base: toml::Table,
    parameters: toml::Table,
    #[serde(default = "yes")]
    one_at_a_time: bool,
    #[serde(default)]
    seeds: Vec<u64>,
}

fn yes() -> bool {
    true
}

impl GridSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GridFile = toml::from_str(text).map_err(|e| Error::Config(format!("invalid grid spec: {}", e.message())))?;
        let base = RunConfig::from_table(file.base)?;
        let mut parameters = Vec::new();
        for (name, values) in file.parameters {
            match values {
                toml::Value::Array(v) => parameters.push((name, v)),
                other => return Err(Error::Config(format!("parameter '{name}' needs a list of candidates, got {other}"))),
            }
        }
        let seeds = if file.seeds.is_empty() { vec![base.seed] } else { file.seeds };
        Ok(Self {
            base,
            parameters,
            one_at_a_time: file.one_at_a_time,
            seeds,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Every sweep with its candidates as `(label, config without seed)`.
    fn sweeps(&self) -> Result<Vec<(String, Vec<(String, RunConfig)>)>> {
        if self.parameters.is_empty() || self.parameters.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::Config("grid search needs at least one candidate per parameter".into()));
        }
        let groups: Vec<(String, Vec<Vec<(String, toml::Value)>>)> = if self.one_at_a_time {
            self.parameters
                .iter()
                .map(|(name, values)| (name.clone(), values.iter().map(|v| vec![(name.clone(), v.clone())]).collect()))
                .collect()
        } else {
            let mut combos: Vec<Vec<(String, toml::Value)>> = vec![vec![]];
            for (name, values) in &self.parameters {
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        values.iter().map(move |v| {
                            let mut c = c.clone();
                            c.push((name.clone(), v.clone()));
                            c
                        })
                    })
                    .collect();
            }
            let name = self.parameters.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join("+");
            vec![(name, combos)]
        };
        groups
            .into_iter()
            .map(|(name, combos)| {
                let candidates = combos
                    .into_iter()
                    .map(|assign| {
                        let label = assign.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",");
                        Ok((label.clone(), self.apply(&assign).map_err(|e| Error::Config(format!("candidate {label}: {e}")))?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((name, candidates))
            })
            .collect()
    }

    fn apply(&self, assign: &[(String, toml::Value)]) -> Result<RunConfig> {
        let mut table = toml::Table::try_from(&self.base).map_err(|e| Error::Config(e.to_string()))?;
        for (path, value) in assign {
            let mut overlay = value.clone();
            for key in path.rsplit('.') {
                let mut t = toml::Table::new();
                t.insert(key.to_string(), overlay);
                overlay = toml::Value::Table(t);
            }
            let toml::Value::Table(t) = overlay else { unreachable!() };
            merge(&mut table, t);
        }
        RunConfig::from_table(table)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Only one candidate.
    Single,
    /// Best in more than half of the test cases.
    Majority,
    /// Head-to-head of the two candidates with the most case wins.
    TopTwo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub label: String,
    /// Final running average per test case, `None` where the run failed.
    pub scores: Vec<Option<f64>>,
    pub errors: Vec<Option<String>>,
    /// Running average averaged over the successful test cases.
    pub curve: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub seeds: Vec<u64>,
    pub candidates: Vec<CandidateResult>,
    /// Advisory nomination; configs are never changed automatically.
    pub winner: Option<usize>,
    pub rule: Option<SelectionRule>,
    /// The nomination came down to listing order.
    pub tie: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub base_run: String,
    pub sweeps: Vec<SweepResult>,
}

fn child_dir(base: &Path, parameter: &str, label: &str) -> PathBuf {
    let clean = |s: &str| s.chars().map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' }).collect::<String>();
    base.join("tune").join(clean(parameter)).join(clean(label))
}

/// Trains every candidate on every seed, in parallel, and nominates a
/// winner per sweep. Failed child runs are recorded, not propagated.
pub fn grid_search(gs: &GridSpec) -> Result<GridReport> {
    let sweeps = gs.sweeps()?;
    let mut jobs = Vec::new();
    for (si, (parameter, candidates)) in sweeps.iter().enumerate() {
        for (ci, (label, cfg)) in candidates.iter().enumerate() {
            for (k, &seed) in gs.seeds.iter().enumerate() {
                let mut child = cfg.clone();
                child.seed = seed;
                child.output_dir = child_dir(&gs.base.output_dir, parameter, label);
                jobs.push((si, ci, k, child));
            }
        }
    }
    let outcomes: Vec<(usize, usize, usize, std::result::Result<Vec<f64>, String>)> = jobs
        .into_par_iter()
        .map(|(si, ci, k, child)| {
            let out = run_training(&child).map_err(|e| e.to_string()).and_then(|r| {
                if r.running_average.is_empty() {
                    Err("run has no training episodes".to_string())
                } else {
                    Ok(r.running_average)
                }
            });
            (si, ci, k, out)
        })
        .collect();
    let mut results: Vec<SweepResult> = sweeps
        .iter()
        .map(|(parameter, candidates)| SweepResult {
            parameter: parameter.clone(),
            seeds: gs.seeds.clone(),
            candidates: candidates
                .iter()
                .map(|(label, _)| CandidateResult {
                    label: label.clone(),
                    scores: vec![None; gs.seeds.len()],
                    errors: vec![None; gs.seeds.len()],
                    curve: vec![],
                })
                .collect(),
            winner: None,
            rule: None,
            tie: false,
        })
        .collect();
    let mut curves: Vec<Vec<Vec<Vec<f64>>>> = results.iter().map(|s| vec![vec![]; s.candidates.len()]).collect();
    for (si, ci, k, out) in outcomes {
        let cand = &mut results[si].candidates[ci];
        match out {
            Ok(curve) => {
                cand.scores[k] = curve.last().copied();
                curves[si][ci].push(curve);
            }
            Err(e) => cand.errors[k] = Some(e),
        }
    }
    for (sweep, sweep_curves) in results.iter_mut().zip(curves) {
        for (cand, cs) in sweep.candidates.iter_mut().zip(sweep_curves) {
            cand.curve = mean_curve(&cs);
        }
        let scores: Vec<Vec<Option<f64>>> = sweep.candidates.iter().map(|c| c.scores.clone()).collect();
        if let Some((w, rule, tie)) = nominate(&scores) {
            sweep.winner = Some(w);
            sweep.rule = Some(rule);
            sweep.tie = tie;
        }
    }
    Ok(GridReport {
        base_run: gs.base.run_name(),
        sweeps: results,
    })
}

fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len).map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64).collect()
}

/// Applies the selection rule to `scores[candidate][case]`. Returns the
/// winner, the rule that decided it and whether listing order broke a tie.
pub fn nominate(scores: &[Vec<Option<f64>>]) -> Option<(usize, SelectionRule, bool)> {
    let n = scores.len();
    let cases = scores.first().map_or(0, Vec::len);
    if n == 1 {
        return scores[0].iter().any(Option::is_some).then_some((0, SelectionRule::Single, false));
    }
    let mut wins = vec![0usize; n];
    let mut tied_win = vec![false; n];
    let mut decided = 0;
    for k in 0..cases {
        let best = (0..n).filter_map(|i| scores[i][k].map(|s| (i, s))).fold(None, |acc: Option<(usize, f64)>, (i, s)| match acc {
            Some((_, b)) if s <= b => acc,
            _ => Some((i, s)),
        });
        if let Some((i, s)) = best {
            decided += 1;
            wins[i] += 1;
            if (0..n).any(|j| j != i && scores[j][k] == Some(s)) {
                tied_win[i] = true;
            }
        }
    }
    if decided == 0 {
        return None;
    }
    if let Some(i) = (0..n).find(|&i| 2 * wins[i] > decided) {
        return Some((i, SelectionRule::Majority, tied_win[i]));
    }
    let mean = |i: usize| {
        let v: Vec<f64> = scores[i].iter().flatten().copied().collect();
        if v.is_empty() { f64::NEG_INFINITY } else { v.iter().sum::<f64>() / v.len() as f64 }
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| wins[b].cmp(&wins[a]).then(mean(b).total_cmp(&mean(a))));
    let (a, b) = (order[0].min(order[1]), order[0].max(order[1]));
    let (mut a_better, mut b_better) = (0, 0);
    for k in 0..cases {
        if let (Some(x), Some(y)) = (scores[a][k], scores[b][k]) {
            if x > y {
                a_better += 1;
            } else if y > x {
                b_better += 1;
            }
        }
    }
    let winner = match a_better.cmp(&b_better) {
        std::cmp::Ordering::Greater => (a, false),
        std::cmp::Ordering::Less => (b, false),
        std::cmp::Ordering::Equal => match mean(a).total_cmp(&mean(b)) {
            std::cmp::Ordering::Less => (b, false),
            std::cmp::Ordering::Greater => (a, false),
            std::cmp::Ordering::Equal => (a, true),
        },
    };
    Some((winner.0, SelectionRule::TopTwo, winner.1))
}

/// Writes per-sweep score tables, curve plots and a summary named after the
/// base run into `dir`.
pub fn emit_grid(report: &GridReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut summary = format!("base = {}\nwindow = {RUNNING_WINDOW}\n", report.base_run);
    for sweep in &report.sweeps {
        let stem = format!("{}_tune_{}", report.base_run, sweep.parameter.replace(['.', '+'], "_"));
        let mut csv = "candidate,seed,score,error\n".to_string();
        for c in &sweep.candidates {
            for (k, seed) in sweep.seeds.iter().enumerate() {
                let score = c.scores[k].map_or(String::new(), |s| s.to_string());
                let error = c.errors[k].as_deref().unwrap_or("").replace([',', '\n'], ";");
                let _ = writeln!(csv, "\"{}\",{seed},{score},{error}", c.label.replace('"', "'"));
            }
        }
        let path = dir.join(format!("{stem}.csv"));
        std::fs::write(&path, csv)?;
        written.push(path);
        let series: Vec<Series> = sweep
            .candidates
            .iter()
            .map(|c| Series {
                label: c.label.clone(),
                points: c.curve.iter().enumerate().map(|(k, v)| ((k + 1) as f64, *v)).collect(),
                spread: None,
            })
            .collect();
        let path = dir.join(format!("{stem}.svg"));
        std::fs::write(&path, line_chart(&format!("Tuning {}", sweep.parameter), "episode", "running average", &series))?;
        written.push(path);
        let nominated = match (sweep.winner, sweep.rule) {
            (Some(w), Some(rule)) => format!("{} ({rule:?}{})", sweep.candidates[w].label, if sweep.tie { ", tie" } else { "" }),
            _ => "none".into(),
        };
        let _ = writeln!(summary, "{} = {nominated}", sweep.parameter);
    }
    let path = dir.join(format!("{}_tune_summary.txt", report.base_run));
    std::fs::write(&path, summary)?;
    written.push(path);
    let path = dir.join(format!("{}_tune.json", report.base_run));
    std::fs::write(&path, serde_json::to_string_pretty(report).map_err(|e| contract(e.to_string()))?)?;
    written.push(path);
    Ok(written)
}
