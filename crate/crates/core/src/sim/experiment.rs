use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_factor, simulate_panel, DgpKind, DgpSpec};
use crate::error::{Error, Result};
use crate::eval::rmse;
use crate::favar::{
    one_step_factor_forecasts, run_setup, ChainSetup, FactorScheme, FavarConfig, MeasurementKind, PanelData,
};
use crate::linalg;

/// Chain settings for the single-factor experiments: J = 1, L = 3 and
/// desk-scale chain lengths, keeping every observation in the sample.
pub fn experiment_chain() -> FavarConfig {
    FavarConfig {
        n_factors: 1,
        n_lags: 3,
        n_draws: 2000,
        n_burn: 1000,
        thin: 1,
        drop_training: false,
        store_forests: false,
        ..FavarConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dgp: DgpSpec,
    pub chain: FavarConfig,
    /// First forecast target, as a fraction of the sample.
    pub eval_start: f64,
    /// Factor estimates feeding the forecasts; one row per scheme.
    pub schemes: Vec<FactorScheme>,
    pub kinds: Vec<DgpKind>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dgp: DgpSpec::default(),
            chain: experiment_chain(),
            eval_start: 0.5,
            schemes: vec![FactorScheme::Filtered, FactorScheme::Smoothed],
            kinds: DgpKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub dgp: DgpKind,
    /// `fabart`, `favar` or `rw`.
    pub estimator: String,
    /// Empty for the random walk.
    pub scheme: String,
    /// In standardized factor units.
    pub rmse: f64,
    pub ratio_to_rw: f64,
    /// Random-walk RMSE in the factor's own units.
    pub rw_rmse_levels: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ForecastRow>,
    pub factor: Vec<f64>,
}

impl ExperimentResult {
    pub fn ratio(&self, dgp: DgpKind, estimator: &str, scheme: FactorScheme) -> Option<f64> {
        let s = scheme_name(scheme);
        self.rows
            .iter()
            .find(|r| r.dgp == dgp && r.estimator == estimator && r.scheme == s)
            .map(|r| r.ratio_to_rw)
    }

    pub fn rmse(&self, dgp: DgpKind, estimator: &str, scheme: FactorScheme) -> Option<f64> {
        let s = scheme_name(scheme);
        self.rows
            .iter()
            .find(|r| r.dgp == dgp && r.estimator == estimator && r.scheme == s)
            .map(|r| r.rmse)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn scheme_name(s: FactorScheme) -> &'static str {
    match s {
        FactorScheme::Filtered => "filtered",
        FactorScheme::Smoothed => "smoothed",
    }
}

fn standardized(v: &[f64]) -> Vec<f64> {
    let m = linalg::mean(v);
    let s = linalg::std_dev(v);
    let s = if s > 0.0 { s } else { 1.0 };
    v.iter().map(|x| (x - m) / s).collect()
}

/// Absolute correlation and the sign that aligns `estimate` with `truth`.
pub fn aligned_correlation(estimate: &[f64], truth: &[f64]) -> (f64, f64) {
    let c = linalg::correlation(estimate, truth);
    let sign = if c < 0.0 { -1.0 } else { 1.0 };
    (c.abs(), sign)
}

/// One-step forecasts of the latent factor for each DGP kind. The factor
/// path and the panel draws are shared across kinds; each estimator's
/// factor is sign-aligned with the truth and compared in standardized
/// units against a random walk on the first principal component.
pub fn recursive_forecast_experiment<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    rng: &mut R,
) -> Result<ExperimentResult> {
    if config.chain.n_factors != 1 {
        return Err(Error::Config("the factor experiment needs exactly one latent factor".into()));
    }
    if !(0.0..1.0).contains(&config.eval_start) {
        return Err(Error::Config(format!("eval_start {} must be in [0, 1)", config.eval_start)));
    }
    let factor_seed: u64 = rng.random();
    let panel_seed: u64 = rng.random();
    let chain_seeds: [u64; 2] = [rng.random(), rng.random()];

    let factor = simulate_factor(&config.dgp, &mut ChaCha8Rng::seed_from_u64(factor_seed))?;
    let truth = standardized(&factor);
    let t_len = truth.len();
    let first = ((config.eval_start * t_len as f64).ceil() as usize).max(1);
    if first >= t_len {
        return Err(Error::Config("evaluation window is empty".into()));
    }
    let targets = &truth[first..];
    let level_sd = linalg::std_dev(&factor);

    let mut jobs = Vec::new();
    for &kind in &config.kinds {
        for (e, est) in [MeasurementKind::Bart, MeasurementKind::Linear].into_iter().enumerate() {
            jobs.push((kind, est, chain_seeds[e]));
        }
    }
    let panels: Vec<(DgpKind, ChainSetup)> = config
        .kinds
        .iter()
        .map(|&kind| {
            let spec = DgpSpec { kind, ..config.dgp.clone() };
            let p = simulate_panel(&factor, &spec, &mut ChaCha8Rng::seed_from_u64(panel_seed))?;
            let data = PanelData::from_matrix(p.x)?;
            Ok((kind, ChainSetup::new(&data, &config.chain)?))
        })
        .collect::<Result<_>>()?;

    let results: Vec<Result<Vec<ForecastRow>>> = jobs
        .par_iter()
        .map(|&(kind, est, seed)| {
            let (_, base) = panels.iter().find(|(k, _)| *k == kind).unwrap();
            let mut setup = base.clone();
            setup.config.measurement = est;
            let res = run_setup(&setup, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let mean_f: Vec<f64> = res.posterior_mean_factors().column(0).iter().copied().collect();
            let (_, sign) = aligned_correlation(&mean_f, &truth);
            let name = match est {
                MeasurementKind::Bart => "fabart",
                MeasurementKind::Linear => "favar",
            };
            config
                .schemes
                .iter()
                .map(|&scheme| {
                    let f = one_step_factor_forecasts(&res, &setup.x, scheme)?;
                    let fc: Vec<f64> = (first - 1..t_len - 1).map(|t| sign * f[(t, 0)]).collect();
                    Ok(ForecastRow {
                        dgp: kind,
                        estimator: name.into(),
                        scheme: scheme_name(scheme).into(),
                        rmse: rmse(&fc, targets)?,
                        ratio_to_rw: f64::NAN,
                        rw_rmse_levels: f64::NAN,
                    })
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    for (kind, setup) in &panels {
        let pca: Vec<f64> = standardized(&setup.pca_reference.column(0).iter().copied().collect::<Vec<_>>());
        let (_, sign) = aligned_correlation(&pca, &truth);
        let rw: Vec<f64> = pca[first - 1..t_len - 1].iter().map(|v| sign * v).collect();
        let rw_rmse = rmse(&rw, targets)?;
        rows.push(ForecastRow {
            dgp: *kind,
            estimator: "rw".into(),
            scheme: String::new(),
            rmse: rw_rmse,
            ratio_to_rw: 1.0,
            rw_rmse_levels: rw_rmse * level_sd,
        });
        for (job, r) in jobs.iter().zip(&results) {
            if job.0 != *kind {
                continue;
            }
            let r = r.as_ref().map_err(|e| Error::Data(format!("{} chain failed: {e}", kind.name())))?;
            for row in r {
                rows.push(ForecastRow {
                    ratio_to_rw: row.rmse / rw_rmse,
                    rw_rmse_levels: rw_rmse * level_sd,
                    ..row.clone()
                });
            }
        }
    }
    Ok(ExperimentResult { rows, factor })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub dgp: DgpSpec,
    pub chain: FavarConfig,
    pub n_reps: usize,
    pub kinds: Vec<DgpKind>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            dgp: DgpSpec::default(),
            chain: experiment_chain(),
            n_reps: 100,
            kinds: DgpKind::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KindSummary {
    pub kind: DgpKind,
    /// Sign-aligned correlation with the truth, one per replication.
    pub correlations: Vec<f64>,
    pub signs: Vec<f64>,
    /// Replications x T: standardized, sign-aligned estimate minus the
    /// standardized truth.
    pub errors: DMatrix<f64>,
}

impl KindSummary {
    pub fn mean_correlation(&self) -> f64 {
        linalg::mean(&self.correlations)
    }

    pub fn error_grand_mean(&self) -> f64 {
        self.errors.mean()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloResult {
    pub factor: Vec<f64>,
    pub summaries: Vec<KindSummary>,
}

impl MonteCarloResult {
    pub fn summary(&self, kind: DgpKind) -> Option<&KindSummary> {
        self.summaries.iter().find(|s| s.kind == kind)
    }

    /// Columns: dgp, replication, correlation, sign.
    pub fn write_correlations(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dgp", "replication", "correlation", "sign"])?;
        for s in &self.summaries {
            for (r, (c, sign)) in s.correlations.iter().zip(&s.signs).enumerate() {
                w.write_record([s.kind.name().to_string(), r.to_string(), c.to_string(), sign.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Long format: dgp, replication, t, error.
    pub fn write_errors(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dgp", "replication", "t", "error"])?;
        for s in &self.summaries {
            for r in 0..s.errors.nrows() {
                for t in 0..s.errors.ncols() {
                    w.write_record([
                        s.kind.name().to_string(),
                        r.to_string(),
                        t.to_string(),
                        s.errors[(r, t)].to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Factor recovery with the factor held fixed and B, R, V redrawn in each
/// replication. Replication `r` uses the same panel and chain seeds for
/// every kind.
pub fn monte_carlo<R: Rng + ?Sized>(config: &MonteCarloConfig, rng: &mut R) -> Result<MonteCarloResult> {
    if config.n_reps == 0 {
        return Err(Error::Config("n_reps must be at least 1".into()));
    }
    if config.chain.n_factors != 1 {
        return Err(Error::Config("the Monte Carlo needs exactly one latent factor".into()));
    }
    let factor_seed: u64 = rng.random();
    let seeds: Vec<(u64, u64)> = (0..config.n_reps).map(|_| (rng.random(), rng.random())).collect();
    let factor = simulate_factor(&config.dgp, &mut ChaCha8Rng::seed_from_u64(factor_seed))?;
    let truth = standardized(&factor);

    let jobs: Vec<(DgpKind, usize)> = config
        .kinds
        .iter()
        .flat_map(|&k| (0..config.n_reps).map(move |r| (k, r)))
        .collect();
    let out: Vec<Result<(f64, f64, Vec<f64>)>> = jobs
        .par_iter()
        .map(|&(kind, r)| {
            let (panel_seed, chain_seed) = seeds[r];
            let spec = DgpSpec { kind, ..config.dgp.clone() };
            let p = simulate_panel(&factor, &spec, &mut ChaCha8Rng::seed_from_u64(panel_seed))?;
            let data = PanelData::from_matrix(p.x)?;
            let setup = ChainSetup::new(&data, &config.chain)?;
            let res = run_setup(&setup, &mut ChaCha8Rng::seed_from_u64(chain_seed))?;
            let est = standardized(&res.posterior_mean_factors().column(0).iter().copied().collect::<Vec<_>>());
            let truth_s = &truth[setup.sample_offset..];
            let (c, sign) = aligned_correlation(&est, truth_s);
            let err = est.iter().zip(truth_s).map(|(e, t)| sign * e - t).collect();
            Ok((c, sign, err))
        })
        .collect();

    let mut summaries = Vec::new();
    for &kind in &config.kinds {
        let mut correlations = Vec::new();
        let mut signs = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (job, o) in jobs.iter().zip(&out) {
            if job.0 != kind {
                continue;
            }
            let (c, s, e) = o.as_ref().map_err(|e| Error::Data(format!("replication {} failed: {e}", job.1)))?;
            correlations.push(*c);
            signs.push(*s);
            rows.push(e.clone());
        }
        let width = rows[0].len();
        let errors = DMatrix::from_fn(rows.len(), width, |r, t| rows[r][t]);
        summaries.push(KindSummary {
            kind,
            correlations,
            signs,
            errors,
        });
    }
    Ok(MonteCarloResult { factor, summaries })
}
