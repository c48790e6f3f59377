//! Forecast scoring: RMSE, kernel log predictive scores, cumulative
//! absolute log scores and the random-walk benchmark.

mod table;

pub use table::{evaluate, EnsembleRecord, EvalOptions, EvalRow, LsAggregate, RealizedRecord, ScoreSeries};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg;

pub fn rmse(forecasts: &[f64], actuals: &[f64]) -> Result<f64> {
    if forecasts.len() != actuals.len() || forecasts.is_empty() {
        return Err(Error::Dimension(format!(
            "{} forecasts vs {} actuals",
            forecasts.len(),
            actuals.len()
        )));
    }
    let mse = forecasts
        .iter()
        .zip(actuals)
        .map(|(f, a)| (f - a).powi(2))
        .sum::<f64>()
        / forecasts.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Bandwidth {
    /// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
    Silverman,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeOptions {
    pub bandwidth: Bandwidth,
    /// Lower bound applied to the log density.
    pub log_floor: f64,
}

impl Default for KdeOptions {
    fn default() -> Self {
        KdeOptions {
            bandwidth: Bandwidth::Silverman,
            log_floor: 1e-12f64.ln(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogScore {
    pub value: f64,
    /// The floor replaced a smaller log density.
    pub floored: bool,
}

/// Predictive draws for one target and forecast origin; `draws[h - 1]`
/// holds the sample for horizon `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveEnsemble {
    pub target_name: String,
    pub origin_date: String,
    pub draws: Vec<Vec<f64>>,
}

impl PredictiveEnsemble {
    pub fn log_score(&self, horizon: usize, realized: f64, options: &KdeOptions) -> Result<LogScore> {
        let d = self
            .draws
            .get(horizon.wrapping_sub(1))
            .ok_or_else(|| Error::Config(format!("no draws for horizon {horizon}")))?;
        log_score(d, realized, options)
    }
}

fn quantile_sorted(x: &[f64], q: f64) -> f64 {
    let pos = q * (x.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    x[lo] + (pos - lo as f64) * (x[hi] - x[lo])
}

pub fn silverman_bandwidth(draws: &[f64]) -> f64 {
    let n = draws.len() as f64;
    let sd = linalg::std_dev(draws);
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian-kernel density of the draws evaluated at `realized`, in logs.
pub fn log_score(draws: &[f64], realized: f64, options: &KdeOptions) -> Result<LogScore> {
    if draws.len() < 2 {
        return Err(Error::Data("at least two predictive draws are needed".into()));
    }
    let sd = linalg::std_dev(draws);
    if !(sd > 0.0) {
        return Err(Error::Data("predictive ensemble has zero variance".into()));
    }
    let h = match options.bandwidth {
        Bandwidth::Silverman => silverman_bandwidth(draws),
        Bandwidth::Fixed(h) if h > 0.0 => h,
        Bandwidth::Fixed(h) => return Err(Error::Config(format!("bandwidth {h} must be positive"))),
    };
    // log-sum-exp over kernels
    let logs: Vec<f64> = draws
        .iter()
        .map(|d| -0.5 * ((realized - d) / h).powi(2))
        .collect();
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs.iter().map(|l| (l - mx).exp()).sum();
    let value = mx + s.ln() - (draws.len() as f64).ln() - h.ln() - 0.5 * (2.0 * PI).ln();
    if value < options.log_floor || !value.is_finite() {
        Ok(LogScore {
            value: options.log_floor,
            floored: true,
        })
    } else {
        Ok(LogScore { value, floored: false })
    }
}

/// Running sum of absolute log scores (lower is better).
pub fn cumulative_abs_log_scores(scores: &[f64]) -> Vec<f64> {
    scores
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.abs();
            Some(*acc)
        })
        .collect()
}

/// No-change forecasts: the forecast of `series[t + h]` is `series[t]`.
pub fn rw_benchmark(series: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 || series.len() <= horizon {
        return Err(Error::Data(format!(
            "{} observations are not enough for horizon {horizon}",
            series.len()
        )));
    }
    Ok(series[..series.len() - horizon].to_vec())
}
