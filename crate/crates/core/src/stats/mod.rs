//! Summary statistics, distribution plots and the paired signed-rank test
//! used to compare trained agents.

mod wilcoxon;

pub use wilcoxon::{
    signed_rank_exact_p, signed_rank_normal_p, wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult,
    EXACT_LIMIT, SIGNIFICANCE,
};

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{contract, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnivariateSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// Absent when the data are constant.
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

pub fn mean(data: &[f64]) -> f64 {
    data.iter().sum::<f64>() / data.len() as f64
}

pub fn median(data: &[f64]) -> f64 {
    let mut s = data.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

pub fn univariate(data: &[f64]) -> Result<UnivariateSummary> {
    let n = data.len();
    if n < 2 {
        return Err(contract(format!("univariate statistics need at least 2 values, got {n}")));
    }
    if data.iter().all(|&x| x == data[0]) {
        return Ok(UnivariateSummary {
            n,
            mean: data[0],
            median: data[0],
            std: 0.0,
            skewness: None,
            kurtosis: None,
        });
    }
    let m = mean(data);
    let nf = n as f64;
    let central = |k: i32| data.iter().map(|x| (x - m).powi(k)).sum::<f64>();
    let std = (central(2) / (nf - 1.0)).sqrt();
    let (skewness, kurtosis) = if std > 0.0 {
        (Some(central(3) / (nf * std.powi(3))), Some(central(4) / (nf * std.powi(4))))
    } else {
        (None, None)
    };
    Ok(UnivariateSummary {
        n,
        mean: m,
        median: median(data),
        std,
        skewness,
        kurtosis,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Equal-width bins spanning `[min, max]`; the last bin is closed.
pub fn histogram(data: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    if data.is_empty() || bins == 0 {
        return Err(contract("histogram needs data and at least one bin"));
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: lo + width * i as f64,
            hi: if i + 1 == bins { hi } else { lo + width * (i + 1) as f64 },
            count: 0,
        })
        .collect();
    for &x in data {
        let i = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
        out[i].count += 1;
    }
    Ok(out)
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Standard normal quantile, polished with one Newton step.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let n = standard_normal();
    let x = n.inverse_cdf(p);
    let d = n.pdf(x);
    if d > 0.0 {
        x - (n.cdf(x) - p) / d
    } else {
        x
    }
}

/// `(theoretical, sample)` quantile pairs: standard normal quantiles at
/// `(i - 0.5) / n` against the sorted standardized data.
pub fn qq_points(data: &[f64]) -> Result<Vec<(f64, f64)>> {
    if data.len() < 2 {
        return Err(contract("Q-Q plot needs at least 2 values"));
    }
    let s = univariate(data)?;
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let z = if s.std > 0.0 { (x - s.mean) / s.std } else { 0.0 };
            (inverse_normal_cdf((i as f64 + 0.5) / n), z)
        })
        .collect())
}
