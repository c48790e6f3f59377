use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kalman::{carter_kohn, StateInit, StateSpace};
use super::measurement::{
    project_loadings, sample_linear_equation, ForestMap, LinearMap, MeasurementMap,
};
use super::panel::PanelData;
use super::var::{ar1_calibration, build_dummy_observations, sample_var_coefficients, var_posterior, DummyObservations};
use super::{FavarConfig, MeasurementKind};
use crate::bart::{backfit_sweep, Forest, SigmaPrior, SweepStats, TargetScale};
use crate::error::{Error, Result};
use crate::linalg;

/// Parameters and factors of one Gibbs iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainDraw {
    pub state: StateSpace,
    /// T x J latent factors (standardized).
    pub factors: DMatrix<f64>,
    /// One forest per panel column; empty for the linear measurement or when
    /// forests are not stored.
    pub forests: Vec<Forest>,
}

/// Per-iteration summaries for convergence monitoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mean_meas_sd: f64,
    pub loading_norm: f64,
    pub innov_trace: f64,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub first_half_mean: f64,
    pub second_half_mean: f64,
}

/// Everything the sampler needs that does not change across iterations.
#[derive(Clone, Debug)]
pub struct ChainSetup {
    pub config: FavarConfig,
    /// Standardized panel over the estimation sample.
    pub x: DMatrix<f64>,
    pub z: Option<Vec<f64>>,
    /// Row of the full panel where the estimation sample starts.
    pub sample_offset: usize,
    pub dummies: DummyObservations,
    /// Panel columns mapped to `[-0.5, 0.5]`, the targets of the trees.
    pub unit_targets: Vec<Vec<f64>>,
    pub scales: Vec<TargetScale>,
    pub sigma_priors: Vec<SigmaPrior>,
    /// Principal components used to initialize and sign the factors.
    pub pca_reference: DMatrix<f64>,
    pub init: StateInit,
    /// When false the factors stay at their initial values.
    pub update_factors: bool,
}

fn residual_sd(x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let yv = DMatrix::from_column_slice(y.len(), 1, y);
    let b = linalg::least_squares(x, &yv)?;
    let r = &yv - x * b;
    let dof = (x.nrows() as f64 - x.ncols() as f64).max(1.0);
    let s = (r.iter().map(|v| v * v).sum::<f64>() / dof).sqrt();
    Ok(s.max(1e-6))
}

impl ChainSetup {
    pub fn new(data: &PanelData, config: &FavarConfig) -> Result<Self> {
        config.validate()?;
        let (t_all, n) = (data.n_obs(), data.n_vars());
        let j = config.n_factors;
        if j > n {
            return Err(Error::Config(format!("{j} factors for a panel of {n} variables")));
        }
        let m = j + usize::from(data.has_observed_factor());
        let offset = if config.drop_training { config.training_obs } else { 0 };
        let t = t_all.saturating_sub(offset);
        if t <= m * config.n_lags + 1 {
            return Err(Error::Config(format!(
                "estimation sample of {t} observations is too short for {m} variables and {} lags",
                config.n_lags
            )));
        }
        let x_full = data.x_standardized();
        let z_full = data.z_standardized();

        // prior calibration on the leading observations
        let pcs_full = linalg::principal_components(x_full, j)?;
        let y_full = augment(z_full, &pcs_full);
        let n_train = if config.training_obs >= 4 {
            config.training_obs.min(t_all)
        } else {
            t_all
        };
        let (mu, sd) = ar1_calibration(&y_full.rows(0, n_train).into_owned())
            .map_err(|e| e.at_step("prior calibration"))?;
        let dummies = build_dummy_observations(
            &mu,
            &sd,
            config.iota,
            config.lambda_soc,
            config.n_lags,
            config.constant_scale,
        )?;

        let x = x_full.rows(offset, t).into_owned();
        let z = z_full.map(|z| z[offset..].to_vec());
        let pca_reference = linalg::principal_components(&x, j)?;
        let y0 = augment(z.as_deref(), &pca_reference);
        let nu = config.bart_prior.sigma_df(t);
        let mut unit_targets = Vec::with_capacity(n);
        let mut scales = Vec::with_capacity(n);
        let mut sigma_priors = Vec::with_capacity(n);
        let y0c = with_constant(&y0);
        for col in 0..n {
            let xc: Vec<f64> = x.column(col).iter().copied().collect();
            let prior = match config.measurement {
                MeasurementKind::Bart => {
                    let s = TargetScale::fit(&xc);
                    let u: Vec<f64> = xc.iter().map(|&v| s.to_unit(v)).collect();
                    let sig = residual_sd(&y0c, &u)?;
                    unit_targets.push(u);
                    scales.push(s);
                    SigmaPrior::calibrate(sig, nu, config.bart_prior.quantile_v)?
                }
                MeasurementKind::Linear => {
                    let sig = residual_sd(&y0, &xc)?;
                    SigmaPrior::calibrate(sig, nu, config.bart_prior.quantile_v)?
                }
            };
            sigma_priors.push(prior);
        }
        Ok(ChainSetup {
            config: config.clone(),
            x,
            z,
            sample_offset: offset,
            dummies,
            unit_targets,
            scales,
            sigma_priors,
            pca_reference,
            init: StateInit::standard(m * config.n_lags),
            update_factors: true,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.x.ncols()
    }

    pub fn observed_factor(&self) -> bool {
        self.z.is_some()
    }

    /// `[Z, F]` over the estimation sample.
    pub fn y_path(&self, factors: &DMatrix<f64>) -> DMatrix<f64> {
        augment(self.z.as_deref(), factors)
    }

    /// Starting point: principal-component factors, projection loadings,
    /// posterior-mean VAR and stump forests.
    pub fn initial_draw(&self) -> Result<ChainDraw> {
        let factors = self.pca_reference.clone();
        let y = self.y_path(&factors);
        let a = project_loadings(&y, &self.x)?;
        let resid = &self.x - &y * &a;
        let t = self.n_obs() as f64;
        let meas_var: Vec<f64> = resid
            .column_iter()
            .map(|c| (c.iter().map(|v| v * v).sum::<f64>() / t).max(1e-6))
            .collect();
        let post = var_posterior(&y, self.config.n_lags, &self.dummies)?;
        let var = super::var::VarCoefficients::new(y.ncols(), self.config.n_lags, post.mean.clone())?;
        let forests = match self.config.measurement {
            MeasurementKind::Bart => (0..self.n_vars())
                .map(|j| {
                    let u = &self.unit_targets[j];
                    let sigma = self.sigma_priors[j].xi.sqrt();
                    Forest::new(
                        self.config.bart_prior.n_trees,
                        linalg::mean(u),
                        sigma,
                        j,
                        self.sigma_priors[j],
                    )
                })
                .collect(),
            MeasurementKind::Linear => Vec::new(),
        };
        Ok(ChainDraw {
            state: StateSpace {
                loadings: a.transpose(),
                meas_var,
                var,
                innov_cov: post.sigma_mean(),
                observed_factor: self.observed_factor(),
            },
            factors,
            forests,
        })
    }
}

fn augment(z: Option<&[f64]>, f: &DMatrix<f64>) -> DMatrix<f64> {
    match z {
        None => f.clone(),
        Some(z) => {
            let mut y = DMatrix::zeros(f.nrows(), f.ncols() + 1);
            for t in 0..f.nrows() {
                y[(t, 0)] = z[t];
            }
            y.columns_mut(1, f.ncols()).copy_from(f);
            y
        }
    }
}

fn with_constant(y: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(y.nrows(), y.ncols() + 1, 1.0);
    out.columns_mut(0, y.ncols()).copy_from(y);
    out
}

/// Standardize each factor and flip its sign to correlate positively with
/// the matching reference column.
pub fn normalize_factors(factors: &mut DMatrix<f64>, reference: &DMatrix<f64>) {
    for j in 0..factors.ncols() {
        let col: Vec<f64> = factors.column(j).iter().copied().collect();
        let m = linalg::mean(&col);
        let s = linalg::std_dev(&col);
        let s = if s > 0.0 { s } else { 1.0 };
        let r: Vec<f64> = reference.column(j).iter().copied().collect();
        let std: Vec<f64> = col.iter().map(|v| (v - m) / s).collect();
        let sign = if linalg::correlation(&std, &r) < 0.0 { -1.0 } else { 1.0 };
        for (t, v) in std.into_iter().enumerate() {
            factors[(t, j)] = sign * v;
        }
    }
}

/// One pass of the sampler: VAR, measurement equations, loadings, factors.
pub fn gibbs_iteration<R: Rng + ?Sized>(
    draw: ChainDraw,
    setup: &ChainSetup,
    rng: &mut R,
) -> Result<(ChainDraw, SweepStats)> {
    let ChainDraw {
        state: _,
        factors,
        mut forests,
    } = draw;
    let y = setup.y_path(&factors);
    let (var, innov_cov) = sample_var_coefficients(&y, setup.config.n_lags, &setup.dummies, rng)
        .map_err(|e| e.at_step("VAR coefficients"))?;

    let n = setup.n_vars();
    let seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    let mut fitted = DMatrix::zeros(setup.n_obs(), n);
    let mut meas_var = vec![0.0; n];
    let mut stats = SweepStats::default();
    match setup.config.measurement {
        MeasurementKind::Bart => {
            if forests.len() != n {
                return Err(Error::Dimension(format!("{} forests for {n} variables", forests.len())));
            }
            let prior = &setup.config.bart_prior;
            let results: Vec<Result<(Vec<f64>, SweepStats)>> = forests
                .par_iter_mut()
                .zip(seeds.par_iter())
                .enumerate()
                .map(|(j, (forest, &seed))| {
                    let mut local = ChaCha8Rng::seed_from_u64(seed);
                    backfit_sweep(forest, &setup.unit_targets[j], &y, prior, &mut local)
                })
                .collect();
            for (j, res) in results.into_iter().enumerate() {
                let (fit, s) = res.map_err(|e| e.at_step("measurement equations"))?;
                let scale = &setup.scales[j];
                for (t, v) in fit.into_iter().enumerate() {
                    fitted[(t, j)] = scale.from_unit(v);
                }
                meas_var[j] = (forests[j].sigma * scale.width()).powi(2).max(1e-10);
                stats.merge(&s);
            }
        }
        MeasurementKind::Linear => {
            let results: Vec<Result<(Vec<f64>, f64)>> = seeds
                .par_iter()
                .enumerate()
                .map(|(j, &seed)| {
                    let mut local = ChaCha8Rng::seed_from_u64(seed);
                    let xc: Vec<f64> = setup.x.column(j).iter().copied().collect();
                    sample_linear_equation(&y, &xc, &setup.sigma_priors[j], &mut local)
                })
                .collect();
            for (j, res) in results.into_iter().enumerate() {
                let (g, s2) = res.map_err(|e| e.at_step("measurement equations"))?;
                for t in 0..setup.n_obs() {
                    fitted[(t, j)] = (0..g.len()).map(|k| y[(t, k)] * g[k]).sum();
                }
                meas_var[j] = s2.max(1e-10);
            }
        }
    }
    let loadings = project_loadings(&y, &fitted)
        .map_err(|e| e.at_step("loading projection"))?
        .transpose();
    let state = StateSpace {
        loadings,
        meas_var,
        var,
        innov_cov,
        observed_factor: setup.observed_factor(),
    };
    let factors = if setup.update_factors {
        let mut f = carter_kohn(&state, &setup.x, setup.z.as_deref(), &setup.init, rng)
            .map_err(|e| e.at_step("factor draw"))?;
        normalize_factors(&mut f, &setup.pca_reference);
        f
    } else {
        factors
    };
    Ok((
        ChainDraw {
            state,
            factors,
            forests,
        },
        stats,
    ))
}

/// Retained draws of a full run plus the bookkeeping needed to replay them.
#[derive(Clone, Debug)]
pub struct ChainResult {
    pub config: FavarConfig,
    pub draws: Vec<ChainDraw>,
    pub trace: Vec<TraceRow>,
    pub sample_offset: usize,
    pub scales: Vec<TargetScale>,
    /// Standardized observed factor over the estimation sample.
    pub z: Option<Vec<f64>>,
    pub pca_reference: DMatrix<f64>,
    pub move_stats: SweepStats,
}

impl ChainResult {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn observed_factor(&self) -> bool {
        self.z.is_some()
    }

    pub fn y_path(&self, i: usize) -> DMatrix<f64> {
        augment(self.z.as_deref(), &self.draws[i].factors)
    }

    /// Measurement map of draw `i`: its forests if stored, else its loadings.
    pub fn measurement_map(&self, i: usize) -> Box<dyn MeasurementMap + '_> {
        let d = &self.draws[i];
        if !d.forests.is_empty() && d.forests.len() == self.scales.len() {
            Box::new(ForestMap {
                forests: &d.forests,
                scales: &self.scales,
            })
        } else {
            Box::new(LinearMap {
                loadings: &d.state.loadings,
            })
        }
    }

    pub fn posterior_mean_factors(&self) -> DMatrix<f64> {
        let first = &self.draws[0].factors;
        let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
        for d in &self.draws {
            acc += &d.factors;
        }
        acc / self.draws.len() as f64
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let series: [(&str, fn(&TraceRow) -> f64); 4] = [
            ("mean_meas_sd", |r| r.mean_meas_sd),
            ("loading_norm", |r| r.loading_norm),
            ("innov_trace", |r| r.innov_trace),
            ("acceptance_rate", |r| r.acceptance_rate),
        ];
        series
            .iter()
            .map(|(name, f)| {
                let v: Vec<f64> = self.trace.iter().map(f).collect();
                let h = v.len() / 2;
                Diagnostic {
                    name: name.to_string(),
                    mean: linalg::mean(&v),
                    sd: if v.len() > 1 { linalg::std_dev(&v) } else { 0.0 },
                    first_half_mean: linalg::mean(&v[..h.max(1).min(v.len())]),
                    second_half_mean: linalg::mean(&v[h..]),
                }
            })
            .collect()
    }
}

fn trace_row(iteration: usize, d: &ChainDraw, stats: &SweepStats) -> TraceRow {
    let n = d.state.meas_var.len().max(1) as f64;
    TraceRow {
        iteration,
        mean_meas_sd: d.state.meas_var.iter().map(|v| v.sqrt()).sum::<f64>() / n,
        loading_norm: d.state.loadings.norm(),
        innov_trace: d.state.innov_cov.trace(),
        acceptance_rate: stats.acceptance_rate(),
    }
}

/// Run a chain from an existing setup.
pub fn run_setup<R: Rng + ?Sized>(setup: &ChainSetup, rng: &mut R) -> Result<ChainResult> {
    let cfg = &setup.config;
    let mut draw = setup.initial_draw()?;
    let mut draws = Vec::with_capacity(cfg.n_retained());
    let mut trace = Vec::with_capacity(cfg.n_retained());
    let mut move_stats = SweepStats::default();
    for it in 0..cfg.n_draws {
        let (next, stats) = gibbs_iteration(draw, setup, rng)?;
        draw = next;
        if it >= cfg.n_burn && (it - cfg.n_burn) % cfg.thin == 0 {
            move_stats.merge(&stats);
            trace.push(trace_row(it, &draw, &stats));
            let mut kept = draw.clone();
            if !cfg.store_forests {
                kept.forests.clear();
            }
            draws.push(kept);
        }
    }
    Ok(ChainResult {
        config: cfg.clone(),
        draws,
        trace,
        sample_offset: setup.sample_offset,
        scales: setup.scales.clone(),
        z: setup.z.clone(),
        pca_reference: setup.pca_reference.clone(),
        move_stats,
    })
}

pub fn run_chain<R: Rng + ?Sized>(
    data: &PanelData,
    config: &FavarConfig,
    rng: &mut R,
) -> Result<ChainResult> {
    let setup = ChainSetup::new(data, config)?;
    run_setup(&setup, rng)
}
