use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chain::ChainResult;
use super::kalman::{kalman_filter, StateInit};
use super::panel::PanelData;
use super::var::VarCoefficients;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastOptions {
    pub innovation_noise: bool,
    pub measurement_noise: bool,
    /// Simulated paths per retained draw.
    pub paths_per_draw: usize,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        ForecastOptions {
            innovation_noise: true,
            measurement_noise: true,
            paths_per_draw: 1,
        }
    }
}

/// Predictive paths, one entry per simulated path.
#[derive(Clone, Debug)]
pub struct ForecastEnsemble {
    pub horizon: usize,
    /// `[Z, F]` paths (h x M) in standardized units.
    pub y: Vec<DMatrix<f64>>,
    /// Panel paths (h x N) in original (transformed) units.
    pub x: Vec<DMatrix<f64>>,
    /// Observed-factor paths in original units.
    pub z: Option<Vec<Vec<f64>>>,
    pub names: Vec<String>,
}

impl ForecastEnsemble {
    /// Predictive draws of panel column `var` at step `h` (1-based).
    pub fn x_draws(&self, var: usize, h: usize) -> Vec<f64> {
        self.x.iter().map(|p| p[(h - 1, var)]).collect()
    }

    pub fn z_draws(&self, h: usize) -> Option<Vec<f64>> {
        self.z.as_ref().map(|z| z.iter().map(|p| p[h - 1]).collect())
    }

    pub fn y_draws(&self, col: usize, h: usize) -> Vec<f64> {
        self.y.iter().map(|p| p[(h - 1, col)]).collect()
    }
}

/// Iterate the VAR forward. `history[0]` is the most recent observation;
/// row `k` of `shocks` holds the standard-normal innovations of step `k`,
/// scaled by `innov_sqrt`. `impact` is added at the first step.
pub fn simulate_paths(
    var: &VarCoefficients,
    innov_sqrt: &DMatrix<f64>,
    history: &[DVector<f64>],
    shocks: &DMatrix<f64>,
    impact: Option<&DVector<f64>>,
) -> DMatrix<f64> {
    let h = shocks.nrows();
    let m = var.n_vars;
    let mut hist: Vec<DVector<f64>> = history.to_vec();
    let mut out = DMatrix::zeros(h, m);
    for k in 0..h {
        let mut next = var.predict_next(&hist) + innov_sqrt * shocks.row(k).transpose();
        if k == 0 {
            if let Some(imp) = impact {
                next += imp;
            }
        }
        out.row_mut(k).copy_from(&next.transpose());
        hist.insert(0, next);
        hist.truncate(var.n_lags);
    }
    out
}

/// Predictive ensemble over `horizon` steps from the end of the sample,
/// mapping factor paths to the panel through each draw's measurement map.
pub fn forecast<R: Rng + ?Sized>(
    result: &ChainResult,
    data: &PanelData,
    horizon: usize,
    options: &ForecastOptions,
    rng: &mut R,
) -> Result<ForecastEnsemble> {
    if horizon == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    if result.draws.is_empty() {
        return Err(Error::Config("no retained draws to forecast from".into()));
    }
    let n = data.n_vars();
    if result.draws[0].state.loadings.nrows() != n {
        return Err(Error::Dimension("panel does not match the chain".into()));
    }
    let std = data.standardization();
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    let mut zs = result.observed_factor().then(Vec::new);
    for (i, d) in result.draws.iter().enumerate() {
        let y = result.y_path(i);
        let l = d.state.var.n_lags;
        let t = y.nrows();
        let history: Vec<DVector<f64>> = (0..l).map(|k| y.row(t - 1 - k).transpose()).collect();
        let sqrt = linalg::psd_sqrt(&d.state.innov_cov);
        let map = result.measurement_map(i);
        for _ in 0..options.paths_per_draw.max(1) {
            let shocks = if options.innovation_noise {
                linalg::standard_normal_matrix(horizon, d.state.var.n_vars, rng)
            } else {
                DMatrix::zeros(horizon, d.state.var.n_vars)
            };
            let path = simulate_paths(&d.state.var, &sqrt, &history, &shocks, None);
            let mut x = map.map(&path)?;
            if options.measurement_noise {
                for j in 0..n {
                    let s = d.state.meas_var[j].sqrt();
                    for k in 0..horizon {
                        x[(k, j)] += s * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    }
                }
            }
            let x = data.destandardize(&x);
            if let Some(zs) = zs.as_mut() {
                zs.push((0..horizon).map(|k| std.z_to_original(path[(k, 0)])).collect());
            }
            ys.push(path);
            xs.push(x);
        }
    }
    Ok(ForecastEnsemble {
        horizon,
        y: ys,
        x: xs,
        z: zs,
        names: data.names.clone(),
    })
}

/// Which factor estimate feeds one-step-ahead forecasts inside the sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorScheme {
    /// Kalman-filtered factors: only panel data up to `t` enter the
    /// forecast of `t + 1`.
    Filtered,
    /// Each draw's smoothed factor path; uses the whole sample and is
    /// therefore not a real-time forecast.
    Smoothed,
}

/// Posterior-mean forecasts of `Y_{t+1}` made at every `t` of the
/// estimation sample, using each draw's VAR. Row `t` forecasts row `t + 1`
/// (T - 1 rows). `x` is the standardized estimation-sample panel.
pub fn one_step_factor_forecasts(
    result: &ChainResult,
    x: &DMatrix<f64>,
    scheme: FactorScheme,
) -> Result<DMatrix<f64>> {
    if result.draws.is_empty() {
        return Err(Error::Config("no retained draws".into()));
    }
    let t_len = x.nrows();
    let m = result.draws[0].state.var.n_vars;
    let mut acc = DMatrix::zeros(t_len - 1, m);
    for (i, d) in result.draws.iter().enumerate() {
        let var = &d.state.var;
        let l = var.n_lags;
        match scheme {
            FactorScheme::Smoothed => {
                let y = result.y_path(i);
                for t in 0..t_len - 1 {
                    let hist: Vec<DVector<f64>> = (0..l)
                        .map(|k| if t >= k { y.row(t - k).transpose() } else { DVector::zeros(m) })
                        .collect();
                    let f = var.predict_next(&hist);
                    acc.row_mut(t).add_assign(&f.transpose());
                }
            }
            FactorScheme::Filtered => {
                let filt = kalman_filter(
                    &d.state,
                    x,
                    result.z.as_deref(),
                    &StateInit::standard(m * l),
                )?;
                let a = var.companion();
                let c = var.intercept();
                for t in 0..t_len - 1 {
                    let next = &a * &filt.means[t];
                    let f = next.rows(0, m) + &c;
                    acc.row_mut(t).add_assign(&f.transpose());
                }
            }
        }
    }
    Ok(acc / result.draws.len() as f64)
}
