use serde::{Deserialize, Serialize};

use super::normal_cdf;
use crate::error::{contract, Result};

/// Largest effective sample size with an exact p-value.
pub const EXACT_LIMIT: usize = 25;
/// Rejection level for `h`.
pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Two-sided p-value.
    pub p_value: f64,
    /// Null hypothesis rejected at the 5% level.
    pub h: bool,
    /// Smaller of the positive and negative rank sums.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    /// Midranks of `|x - y|` for the kept pairs, in input order.
    pub ranks: Vec<f64>,
    pub method: WilcoxonMethod,
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p-value of a positive rank sum `w_plus` given the ranks,
/// counting all `2^n` sign assignments by dynamic programming over doubled
/// (integer) ranks.
pub fn signed_rank_exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w = (2.0 * w_plus).round() as usize;
    let all = 2f64.powi(ranks.len() as i32);
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn signed_rank_normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * normal_cdf(-z)).min(1.0)
}

/// Paired two-sided signed-rank test of `x - y` against a zero median.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(contract(format!("paired samples differ in length: {} vs {}", x.len(), y.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            p_value: 1.0,
            h: false,
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n_effective: 0,
            ranks: vec![],
            method: WilcoxonMethod::Exact,
        });
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let w_minus: f64 = ranks.iter().sum::<f64>() - w_plus;
    let (p_value, method) = if n <= EXACT_LIMIT {
        (signed_rank_exact_p(&ranks, w_plus), WilcoxonMethod::Exact)
    } else {
        (signed_rank_normal_p(&ranks, w_plus), WilcoxonMethod::Normal)
    };
    Ok(WilcoxonResult {
        p_value,
        h: p_value <= SIGNIFICANCE,
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        n_effective: n,
        ranks,
        method,
    })
}
