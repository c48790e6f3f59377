use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::proxy::{instrument_impact, long_run_mean, ProxyOptions};
use crate::error::{Error, Result};
use crate::favar::{simulate_paths, ChainResult, MeasurementMap, Standardization, VarCoefficients};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GirfOptions {
    /// Last horizon; responses cover 0..=horizons.
    pub horizons: usize,
    pub n_sim: usize,
    /// +1 or -1.
    pub shock_sign: f64,
    /// Impact on the first variable of `Y` at horizon 0, in its original
    /// units (for a log-level oil price, 0.10 is a 10% increase).
    pub shock_size: f64,
    pub proxy: ProxyOptions,
}

impl Default for GirfOptions {
    fn default() -> Self {
        GirfOptions {
            horizons: 40,
            n_sim: 500,
            shock_sign: 1.0,
            shock_size: 0.10,
            proxy: ProxyOptions::default(),
        }
    }
}

/// Pooled generalized impulse responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirfResult {
    pub horizons: Vec<usize>,
    pub variables: Vec<String>,
    /// `responses[draw][variable][horizon]`, original units.
    pub responses: Vec<Vec<Vec<f64>>>,
    /// `bands[variable][horizon] = (16%, 50%, 84%)`.
    pub bands: Vec<Vec<(f64, f64, f64)>>,
    /// Monte Carlo standard error of the GIRF averaged over draws.
    pub mc_se: Vec<Vec<f64>>,
    pub shock_sign: f64,
    pub n_used: usize,
    pub n_explosive: usize,
    pub n_weak: usize,
    /// Mean reliability over used draws.
    pub mean_rho_sq: f64,
}

impl GirfResult {
    pub fn exclusion_rate(&self) -> f64 {
        let total = self.n_used + self.n_explosive + self.n_weak;
        if total == 0 {
            0.0
        } else {
            (self.n_explosive + self.n_weak) as f64 / total as f64
        }
    }

    /// Responses with the sign flipped, for presenting negative shocks as
    /// mirror images.
    pub fn mirrored(&self) -> GirfResult {
        let mut out = self.clone();
        for d in out.responses.iter_mut() {
            for v in d.iter_mut() {
                for x in v.iter_mut() {
                    *x = -*x;
                }
            }
        }
        out.bands = pooled_bands(&out.responses);
        out.shock_sign = -self.shock_sign;
        out
    }

    /// Mean response across draws, per variable and horizon.
    pub fn mean_response(&self) -> Vec<Vec<f64>> {
        let nv = self.variables.len();
        let nh = self.horizons.len();
        let mut out = vec![vec![0.0; nh]; nv];
        for d in &self.responses {
            for v in 0..nv {
                for h in 0..nh {
                    out[v][h] += d[v][h] / self.responses.len() as f64;
                }
            }
        }
        out
    }

    /// Tidy table: variable, horizon, quantile, value, shock_sign.
    pub fn write_tidy(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["variable", "horizon", "quantile", "value", "shock_sign"])?;
        for (v, name) in self.variables.iter().enumerate() {
            for (hi, h) in self.horizons.iter().enumerate() {
                let (lo, med, hi_q) = self.bands[v][hi];
                for (q, val) in [("0.16", lo), ("0.50", med), ("0.84", hi_q)] {
                    w.write_record([
                        name.clone(),
                        h.to_string(),
                        q.to_string(),
                        format!("{val:e}"),
                        format!("{}", self.shock_sign),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// `GIRF(+) + GIRF(-)` of the mean responses; zero for a linear system.
pub fn sign_asymmetry(positive: &GirfResult, negative: &GirfResult) -> Vec<Vec<f64>> {
    let p = positive.mean_response();
    let n = negative.mean_response();
    p.iter()
        .zip(&n)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn pooled_bands(responses: &[Vec<Vec<f64>>]) -> Vec<Vec<(f64, f64, f64)>> {
    let nv = responses[0].len();
    let nh = responses[0][0].len();
    (0..nv)
        .map(|v| {
            (0..nh)
                .map(|h| {
                    let mut x: Vec<f64> = responses.iter().map(|d| d[v][h]).collect();
                    x.sort_by(f64::total_cmp);
                    (quantile(&x, 0.16), quantile(&x, 0.50), quantile(&x, 0.84))
                })
                .collect()
        })
        .collect()
}

/// Inputs describing one draw for the response simulation.
pub struct DrawSystem<'a> {
    pub var: &'a VarCoefficients,
    pub innov_cov: &'a DMatrix<f64>,
    pub map: &'a dyn MeasurementMap,
}

/// Mean difference between shocked and baseline paths started at `start`
/// (held for all lags), with both branches sharing every innovation draw.
/// Returns `(Y responses (K+1) x M, X responses (K+1) x N, MC s.e. of both)`.
pub fn simulate_girf<R: Rng + ?Sized>(
    sys: &DrawSystem<'_>,
    start: &DVector<f64>,
    impact: &DVector<f64>,
    horizons: usize,
    n_sim: usize,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let m = sys.var.n_vars;
    let k1 = horizons + 1;
    let sqrt = linalg::psd_sqrt(sys.innov_cov);
    let history = vec![start.clone(); sys.var.n_lags];
    let n_out = sys.map.n_outputs();
    let mut base_all = DMatrix::zeros(n_sim * k1, m);
    let mut shock_all = DMatrix::zeros(n_sim * k1, m);
    for r in 0..n_sim {
        let e = linalg::standard_normal_matrix(k1, m, rng);
        let base = simulate_paths(sys.var, &sqrt, &history, &e, None);
        let shocked = simulate_paths(sys.var, &sqrt, &history, &e, Some(impact));
        base_all.rows_mut(r * k1, k1).copy_from(&base);
        shock_all.rows_mut(r * k1, k1).copy_from(&shocked);
    }
    let xb = sys.map.map(&base_all)?;
    let xs = sys.map.map(&shock_all)?;
    let width = m + n_out;
    let mut sum = DMatrix::<f64>::zeros(k1, width);
    let mut sum_sq = DMatrix::<f64>::zeros(k1, width);
    for r in 0..n_sim {
        for h in 0..k1 {
            let row = r * k1 + h;
            for c in 0..width {
                let d = if c < m {
                    shock_all[(row, c)] - base_all[(row, c)]
                } else {
                    xs[(row, c - m)] - xb[(row, c - m)]
                };
                sum[(h, c)] += d;
                sum_sq[(h, c)] += d * d;
            }
        }
    }
    let n = n_sim as f64;
    let mean = &sum / n;
    let se = DMatrix::from_fn(k1, width, |h, c| {
        if n_sim < 2 {
            return 0.0;
        }
        let var = (sum_sq[(h, c)] / n - mean[(h, c)].powi(2)).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    });
    Ok((
        mean.columns(0, m).into_owned(),
        mean.columns(m, n_out).into_owned(),
        se,
    ))
}

enum DrawOutcome {
    Used { resp: Vec<Vec<f64>>, se: Vec<Vec<f64>>, rho_sq: f64 },
    Explosive,
    Weak,
}

/// Generalized impulse responses to the instrumented shock, pooled over the
/// retained draws. `instrument` is aligned to the estimation sample of the
/// chain; `std` converts standardized responses back to original units.
pub fn girf<R: Rng + ?Sized>(
    result: &ChainResult,
    instrument: &[Option<f64>],
    std: &Standardization,
    x_names: &[String],
    options: &GirfOptions,
    rng: &mut R,
) -> Result<GirfResult> {
    if result.draws.is_empty() {
        return Err(Error::Config("no retained draws".into()));
    }
    let t = result.draws[0].factors.nrows();
    if instrument.len() != t {
        return Err(Error::Dimension(format!(
            "instrument aligned to {} rows, estimation sample has {t}",
            instrument.len()
        )));
    }
    let seeds: Vec<u64> = (0..result.n_draws()).map(|_| rng.random()).collect();
    let observed = result.observed_factor();
    let j = result.draws[0].factors.ncols();
    let mut variables = Vec::new();
    if observed {
        variables.push("z".to_string());
    }
    variables.extend((1..=j).map(|k| format!("f{k}")));
    variables.extend(x_names.iter().cloned());
    let z_scale = if observed { std.z_scale.unwrap_or(1.0) } else { 1.0 };
    let size = options.shock_sign * options.shock_size / z_scale;

    let outcomes: Vec<Result<DrawOutcome>> = (0..result.n_draws())
        .into_par_iter()
        .map(|i| {
            let d = &result.draws[i];
            let y = result.y_path(i);
            let l = d.state.var.n_lags;
            let resid = d.state.var.residuals(&y)?;
            let structural = match instrument_impact(&resid, &instrument[l..], &options.proxy) {
                Ok(s) => s,
                Err(Error::WeakInstrument { .. }) => return Ok(DrawOutcome::Weak),
                Err(e) => return Err(e),
            };
            let start = match long_run_mean(&d.state.var) {
                Ok(v) => v,
                Err(Error::Explosive(_)) => return Ok(DrawOutcome::Explosive),
                Err(e) => return Err(e),
            };
            let impact = structural.scaled(size);
            let map = result.measurement_map(i);
            let sys = DrawSystem {
                var: &d.state.var,
                innov_cov: &d.state.innov_cov,
                map: map.as_ref(),
            };
            let mut local = ChaCha8Rng::seed_from_u64(seeds[i]);
            let (ry, rx, se) =
                simulate_girf(&sys, &start, &impact, options.horizons, options.n_sim, &mut local)?;
            let m = ry.ncols();
            let mut resp = Vec::with_capacity(m + rx.ncols());
            let mut ses = Vec::with_capacity(m + rx.ncols());
            for c in 0..m {
                let s = if observed && c == 0 { z_scale } else { 1.0 };
                resp.push(ry.column(c).iter().map(|v| v * s).collect());
                ses.push(se.column(c).iter().map(|v| v * s).collect());
            }
            for c in 0..rx.ncols() {
                let s = std.x_scales[c];
                resp.push(rx.column(c).iter().map(|v| v * s).collect());
                ses.push(se.column(m + c).iter().map(|v| v * s).collect());
            }
            Ok(DrawOutcome::Used {
                resp,
                se: ses,
                rho_sq: structural.rho_sq,
            })
        })
        .collect();

    let mut responses = Vec::new();
    let mut se_acc: Option<Vec<Vec<f64>>> = None;
    let (mut n_explosive, mut n_weak) = (0, 0);
    let mut rho = 0.0;
    for o in outcomes {
        match o? {
            DrawOutcome::Used { resp, se, rho_sq } => {
                rho += rho_sq;
                match se_acc.as_mut() {
                    None => se_acc = Some(se),
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&se) {
                            for (x, y) in a.iter_mut().zip(b) {
                                *x += y;
                            }
                        }
                    }
                }
                responses.push(resp);
            }
            DrawOutcome::Explosive => n_explosive += 1,
            DrawOutcome::Weak => n_weak += 1,
        }
    }
    if responses.is_empty() {
        return Err(Error::numerical(
            "impulse responses",
            format!("no usable draws ({n_explosive} explosive, {n_weak} weak instrument)"),
        ));
    }
    let n_used = responses.len();
    let mut mc_se = se_acc.unwrap_or_default();
    for v in mc_se.iter_mut() {
        for x in v.iter_mut() {
            *x /= n_used as f64;
        }
    }
    Ok(GirfResult {
        horizons: (0..=options.horizons).collect(),
        variables,
        bands: pooled_bands(&responses),
        responses,
        mc_se,
        shock_sign: options.shock_sign,
        n_used,
        n_explosive,
        n_weak,
        mean_rho_sq: rho / n_used as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::favar::LinearMap;
    use crate::identify::impulse_response;

    fn system() -> (VarCoefficients, DMatrix<f64>, DMatrix<f64>) {
        let b = DMatrix::from_row_slice(3, 2, &[0.5, 0.1, 0.2, 0.4, 0.3, -0.1]);
        let var = VarCoefficients::new(2, 1, b).unwrap();
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let loadings = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, -1.0, 0.2, 0.7]);
        (var, cov, loadings)
    }

    #[test]
    fn zero_shock_gives_zero_response() {
        let (var, cov, l) = system();
        let map = LinearMap { loadings: &l };
        let sys = DrawSystem { var: &var, innov_cov: &cov, map: &map };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (ry, rx, _) =
            simulate_girf(&sys, &DVector::zeros(2), &DVector::zeros(2), 10, 50, &mut rng).unwrap();
        assert_eq!(ry.abs().max(), 0.0);
        assert_eq!(rx.abs().max(), 0.0);
    }

    #[test]
    fn linear_system_matches_closed_form() {
        let (var, cov, l) = system();
        let map = LinearMap { loadings: &l };
        let sys = DrawSystem { var: &var, innov_cov: &cov, map: &map };
        let imp = DVector::from_vec(vec![0.1, 0.05]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (ry, rx, _) = simulate_girf(&sys, &DVector::zeros(2), &imp, 12, 20, &mut rng).unwrap();
        let irf = impulse_response(&var, &imp, 12);
        assert!((&ry - &irf).abs().max() < 1e-12);
        assert!((&rx - &irf * l.transpose()).abs().max() < 1e-12);
        assert!((ry[(0, 0)] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn bands_are_ordered() {
        let responses = vec![
            vec![vec![0.3, 1.0]],
            vec![vec![-0.2, 2.0]],
            vec![vec![0.1, 0.5]],
        ];
        for v in pooled_bands(&responses) {
            for (lo, med, hi) in v {
                assert!(lo <= med && med <= hi);
            }
        }
    }
}
