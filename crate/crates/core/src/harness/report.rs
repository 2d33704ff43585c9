use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{EvalReport, EVAL_CSV_HEADER, TRAINING_CSV_HEADER};
use super::svg::{bar_chart, line_chart, scatter_with_diagonal, Series};
use crate::error::{contract, Result};
use crate::stats::{wilcoxon_signed_rank, WilcoxonResult};

fn label(r: &EvalReport) -> String {
    let c = &r.config;
    format!("{} {} {} s{}", c.kind, c.backend, c.policy, c.seed)
}

fn optional(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| x.to_string())
}

fn write(dir: &Path, name: &str, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    written.push(path);
    Ok(())
}

/// Training CSV exactly as the run writes it incrementally.
pub fn training_csv(report: &EvalReport) -> String {
    let mut s = format!("{TRAINING_CSV_HEADER}\n");
    for (k, (r, avg)) in report.rewards.iter().zip(&report.running_average).enumerate() {
        let _ = writeln!(s, "{},{r},{avg}", k + 1);
    }
    s
}

pub fn eval_csv(report: &EvalReport) -> String {
    let mut s = format!("{EVAL_CSV_HEADER}\n");
    for e in &report.during {
        let _ = writeln!(s, "{},{},{}", e.episode, e.mean, e.std);
    }
    s
}

pub fn final_csv(report: &EvalReport) -> String {
    let mut s = "episode,reward\n".to_string();
    for (k, r) in report.final_eval.iter().flat_map(|f| f.rewards.iter()).enumerate() {
        let _ = writeln!(s, "{},{r}", k + 1);
    }
    s
}

/// Flat `key = value` statistics block, `None` without final-eval rewards.
pub fn stats_block(report: &EvalReport) -> Option<String> {
    let f = report.final_eval.as_ref().filter(|f| !f.rewards.is_empty())?;
    let mut s = String::new();
    let _ = writeln!(s, "run = {}", report.run_name);
    let _ = writeln!(s, "episodes = {}", f.rewards.len());
    match &f.summary {
        Some(u) => {
            let _ = writeln!(s, "mean = {}\nmedian = {}\nstd = {}", u.mean, u.median, u.std);
            let _ = writeln!(s, "skewness = {}\nkurtosis = {}", optional(u.skewness), optional(u.kurtosis));
        }
        None => {
            let _ = writeln!(s, "mean = {}\nmedian = {}\nstd = 0\nskewness = absent\nkurtosis = absent", f.rewards[0], f.rewards[0]);
        }
    }
    let _ = writeln!(s, "random_mean = {}\nrandom_std = {}", f.random_mean, f.random_std);
    if let Some(rank) = report.rank {
        let _ = writeln!(s, "rank = {rank}");
    }
    if let Some(ep) = report.resumed_from {
        let _ = writeln!(s, "resumed_from = {ep}\nreplay_restored = false");
    }
    Some(s)
}

/// Writes the report's CSVs, statistics and plots into `dir`, every file
/// prefixed with the run name. Returns the paths written.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let name = &report.run_name;
    let mut out = Vec::new();
    write(dir, &format!("{name}_training.csv"), &training_csv(report), &mut out)?;
    write(dir, &format!("{name}_eval.csv"), &eval_csv(report), &mut out)?;
    write(dir, &format!("{name}_final.csv"), &final_csv(report), &mut out)?;

    let curve = Series {
        label: "running average".into(),
        points: report.running_average.iter().enumerate().map(|(k, v)| ((k + 1) as f64, *v)).collect(),
        spread: None,
    };
    let svg = line_chart(&format!("Training performance: {}", label(report)), "episode", "reward", &[curve]);
    write(dir, &format!("{name}_running_avg.svg"), &svg, &mut out)?;
    let during = Series {
        label: "frozen eval mean ± std".into(),
        points: report.during.iter().map(|e| (e.episode as f64, e.mean)).collect(),
        spread: Some(report.during.iter().map(|e| e.std).collect()),
    };
    let svg = line_chart(&format!("Performance during training: {}", label(report)), "episode", "reward", &[during]);
    write(dir, &format!("{name}_eval.svg"), &svg, &mut out)?;

    if let (Some(stats), Some(f)) = (stats_block(report), report.final_eval.as_ref()) {
        write(dir, &format!("{name}_stats.txt"), &stats, &mut out)?;
        let mut hist = "lo,hi,count\n".to_string();
        for b in &f.histogram {
            let _ = writeln!(hist, "{},{},{}", b.lo, b.hi, b.count);
        }
        write(dir, &format!("{name}_histogram.csv"), &hist, &mut out)?;
        let mut qq = "theoretical,sample\n".to_string();
        for (t, s) in &f.qq {
            let _ = writeln!(qq, "{t},{s}");
        }
        write(dir, &format!("{name}_qq.csv"), &qq, &mut out)?;

        let bars: Vec<(String, f64, f64)> = f.histogram.iter().map(|b| (format!("{:.1}", b.lo), b.count as f64, 0.0)).collect();
        write(dir, &format!("{name}_histogram.svg"), &bar_chart("Final evaluation rewards", "episodes", &bars), &mut out)?;
        let svg = scatter_with_diagonal("Normal Q-Q plot", "theoretical quantile", "standardized reward", &f.qq);
        write(dir, &format!("{name}_qq.svg"), &svg, &mut out)?;
        let (mean, std) = f.summary.as_ref().map_or((f.rewards[0], 0.0), |u| (u.mean, u.std));
        let mut ranked = vec![(label(report), mean, std), ("random".to_string(), f.random_mean, f.random_std)];
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        write(dir, &format!("{name}_final_ranked.svg"), &bar_chart("Post-training performance", "mean reward", &ranked), &mut out)?;
    }
    let json = serde_json::to_string_pretty(report).map_err(|e| contract(e.to_string()))?;
    write(dir, &format!("{name}_report.json"), &json, &mut out)?;
    Ok(out)
}

fn final_mean(r: &EvalReport) -> Option<f64> {
    let f = r.final_eval.as_ref().filter(|f| !f.rewards.is_empty())?;
    Some(f.rewards.iter().sum::<f64>() / f.rewards.len() as f64)
}

/// Ranks runs by final-eval mean (1 is best, ties keep input order) and
/// writes a ranked bar chart and table named `<stem>_ranking.*` into `dir`.
/// Runs without a final evaluation are left unranked.
pub fn emit_ranking(reports: &mut [EvalReport], dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut order: Vec<usize> = (0..reports.len()).filter(|&i| final_mean(&reports[i]).is_some()).collect();
    order.sort_by(|&a, &b| final_mean(&reports[b]).unwrap().total_cmp(&final_mean(&reports[a]).unwrap()));
    let mut table = "rank,run,mean,std\n".to_string();
    let mut bars = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        reports[i].rank = Some(pos + 1);
        let f = reports[i].final_eval.as_ref().unwrap();
        let (mean, std) = super::run::mean_std(&f.rewards);
        let _ = writeln!(table, "{},{},{mean},{std}", pos + 1, reports[i].run_name);
        bars.push((label(&reports[i]), mean, std));
    }
    let mut out = Vec::new();
    write(dir, &format!("{stem}_ranking.csv"), &table, &mut out)?;
    write(dir, &format!("{stem}_ranking.svg"), &bar_chart("Post-training performance (ranked)", "mean reward", &bars), &mut out)?;
    Ok(out)
}

/// Paired comparison of two runs' final-eval rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub wilcoxon: WilcoxonResult,
    /// Procedure notes: zero differences dropped, tied magnitudes midranked.
    pub zero_handling: String,
    pub tie_handling: String,
}

pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    let ra = &a.final_eval.as_ref().ok_or_else(|| contract(format!("{} has no final evaluation", a.run_name)))?.rewards;
    let rb = &b.final_eval.as_ref().ok_or_else(|| contract(format!("{} has no final evaluation", b.run_name)))?.rewards;
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(Comparison {
        a: a.run_name.clone(),
        b: b.run_name.clone(),
        mean_a: mean(ra),
        mean_b: mean(rb),
        wilcoxon: wilcoxon_signed_rank(ra, rb)?,
        zero_handling: "drop".into(),
        tie_handling: "midrank".into(),
    })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let w = &self.wilcoxon;
        let mut s = String::new();
        let _ = writeln!(s, "a = {}\nb = {}\nmean_a = {}\nmean_b = {}", self.a, self.b, self.mean_a, self.mean_b);
        let _ = writeln!(s, "n_effective = {}\nw_plus = {}\nw_minus = {}\nstatistic = {}", w.n_effective, w.w_plus, w.w_minus, w.statistic);
        let _ = writeln!(s, "p_value = {}\nh = {}\nmethod = {:?}", w.p_value, u8::from(w.h), w.method);
        let _ = writeln!(s, "zero_handling = {}\ntie_handling = {}", self.zero_handling, self.tie_handling);
        let ranks: Vec<String> = w.ranks.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(s, "ranks = {}", ranks.join(" "));
        s
    }
}
