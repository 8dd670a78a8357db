//! Log-log rate fits over sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::RunRecord;

/// Fewest sweep points accepted by [`fit_rate`].
pub const MIN_POINTS: usize = 3;
/// Fewest seeds per sweep point accepted by [`fit_rate`].
pub const MIN_SEEDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sweep {
    #[serde(rename = "T")]
    Horizon,
    #[serde(rename = "sigma2")]
    Sigma2,
}

impl FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "T" | "t" => Ok(Sweep::Horizon),
            "sigma2" | "sigma" => Ok(Sweep::Sigma2),
            other => Err(format!("unknown sweep {other:?}, expected T or sigma2")),
        }
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sweep::Horizon => "T",
            Sweep::Sigma2 => "sigma2",
        })
    }
}

/// Least-squares line through `(log x, log median risk)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub sweep: Sweep,
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub r2: f64,
    pub n_points: usize,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median risk per sweep point, keyed by the swept value.
pub fn medians(records: &[RunRecord], sweep: Sweep) -> Vec<(f64, f64, usize)> {
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let x = match sweep {
            Sweep::Horizon => r.horizon as f64,
            Sweep::Sigma2 => r.sigma * r.sigma,
        };
        groups.entry(x.to_bits()).or_insert_with(|| (x, Vec::new())).1.push(r.risk);
    }
    let mut out: Vec<(f64, f64, usize)> = groups
        .into_values()
        .map(|(x, mut risks)| {
            let n = risks.len();
            (x, median(&mut risks), n)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Fits `log(median risk) = intercept + slope·log(x)` where `x` is `T` or `σ²`.
pub fn fit_rate(records: &[RunRecord], sweep: Sweep) -> Result<RateFit> {
    let points = medians(records, sweep);
    if points.len() < MIN_POINTS {
        return Err(HarnessError::InsufficientPoints {
            needed: format!("{MIN_POINTS} sweep points"),
            found: points.len().to_string(),
        });
    }
    if let Some(&(x, _, n)) = points.iter().find(|p| p.2 < MIN_SEEDS) {
        return Err(HarnessError::InsufficientPoints {
            needed: format!("{MIN_SEEDS} seeds per point"),
            found: format!("{n} at {sweep} = {x}"),
        });
    }
    if points.iter().any(|&(x, m, _)| !(x > 0.0) || !(m > 0.0)) {
        return Err(HarnessError::InsufficientPoints {
            needed: "positive sweep values and median risks".into(),
            found: "a non-positive value".into(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let stderr = if xs.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        sweep,
        slope,
        intercept,
        stderr,
        r2,
        n_points: xs.len(),
    })
}
