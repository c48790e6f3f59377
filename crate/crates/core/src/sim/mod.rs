//! Synthetic single-factor panels: an AR(3) latent factor observed through
//! linear, squared-loading or tanh measurement maps, plus the recursive
//! forecast experiment and the factor-recovery Monte Carlo built on them.

mod experiment;

pub use experiment::{
    aligned_correlation, experiment_chain, monte_carlo, recursive_forecast_experiment, ExperimentConfig, ExperimentResult,
    ForecastRow, KindSummary, MonteCarloConfig, MonteCarloResult,
};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `X = B F + V`
    Linear,
    /// `X = B² F + V`
    SquaredLoading,
    /// `X = tanh(B F) + V`
    Tanh,
}

impl DgpKind {
    pub const ALL: [DgpKind; 3] = [DgpKind::Linear, DgpKind::SquaredLoading, DgpKind::Tanh];

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Linear => "linear",
            DgpKind::SquaredLoading => "squared_loading",
            DgpKind::Tanh => "tanh",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSpec {
    pub intercept: f64,
    pub ar_coefs: [f64; 3],
    pub innov_sd: f64,
    pub n_obs: usize,
    pub n_vars: usize,
    pub loading_range: (f64, f64),
    pub idio_var_range: (f64, f64),
    /// Discarded initial periods.
    pub warmup: usize,
    pub kind: DgpKind,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            intercept: 0.0,
            ar_coefs: [0.6, -0.3, 0.2],
            innov_sd: 1.0,
            n_obs: 300,
            n_vars: 20,
            loading_range: (-0.9, 0.9),
            idio_var_range: (0.1, 1.0),
            warmup: 100,
            kind: DgpKind::Linear,
        }
    }
}

impl DgpSpec {
    pub fn companion(&self) -> DMatrix<f64> {
        let b = self.ar_coefs;
        DMatrix::from_row_slice(3, 3, &[b[0], b[1], b[2], 1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_obs == 0 || self.n_vars == 0 {
            return Err(Error::Config("n_obs and n_vars must be positive".into()));
        }
        if !(self.innov_sd >= 0.0) {
            return Err(Error::Config(format!("innov_sd {} must be non-negative", self.innov_sd)));
        }
        let (lo, hi) = self.loading_range;
        if !(lo <= hi) {
            return Err(Error::Config(format!("loading range ({lo}, {hi}) is empty")));
        }
        let (lo, hi) = self.idio_var_range;
        if !(0.0 <= lo && lo <= hi) {
            return Err(Error::Config(format!("idiosyncratic variance range ({lo}, {hi}) is invalid")));
        }
        let radius = linalg::spectral_radius(&self.companion());
        if !(radius < 1.0) {
            return Err(Error::Explosive(radius));
        }
        Ok(())
    }
}

/// AR(3) factor path of length `n_obs` after `warmup` discarded periods,
/// started from zeros.
pub fn simulate_factor<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let b = spec.ar_coefs;
    let total = spec.warmup + spec.n_obs;
    let mut f = vec![0.0; total + 3];
    for t in 3..total + 3 {
        let e: f64 = rng.sample(rand_distr::StandardNormal);
        f[t] = spec.intercept + b[0] * f[t - 1] + b[1] * f[t - 2] + b[2] * f[t - 3] + spec.innov_sd * e;
    }
    Ok(f[3 + spec.warmup..].to_vec())
}

/// Panel drawn from one factor path together with its true parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedPanel {
    pub x: DMatrix<f64>,
    pub loadings: Vec<f64>,
    pub idio_var: Vec<f64>,
}

/// Noise-free measurement `X = g(B, F)` for the given kind.
pub fn measurement(kind: DgpKind, factor: &[f64], loadings: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(factor.len(), loadings.len(), |t, j| {
        let (f, b) = (factor[t], loadings[j]);
        match kind {
            DgpKind::Linear => b * f,
            DgpKind::SquaredLoading => b * b * f,
            DgpKind::Tanh => (b * f).tanh(),
        }
    })
}

/// Draws B, then the R diagonal, then V in a fixed order, so the same
/// generator state yields identical B, R and V for every kind.
pub fn simulate_panel<R: Rng + ?Sized>(factor: &[f64], spec: &DgpSpec, rng: &mut R) -> Result<SimulatedPanel> {
    if factor.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("factor path is not finite".into()));
    }
    let n = spec.n_vars;
    let (blo, bhi) = spec.loading_range;
    let (rlo, rhi) = spec.idio_var_range;
    let loadings: Vec<f64> = (0..n).map(|_| blo + (bhi - blo) * rng.random::<f64>()).collect();
    let idio_var: Vec<f64> = (0..n).map(|_| rlo + (rhi - rlo) * rng.random::<f64>()).collect();
    let v = linalg::standard_normal_matrix(factor.len(), n, rng);
    let mut x = measurement(spec.kind, factor, &loadings);
    for j in 0..n {
        let s = idio_var[j].sqrt();
        for t in 0..factor.len() {
            x[(t, j)] += s * v[(t, j)];
        }
    }
    Ok(SimulatedPanel { x, loadings, idio_var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_factor_stays_at_zero() {
        let spec = DgpSpec { innov_sd: 0.0, ..Default::default() };
        let f = simulate_factor(&spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(f.len(), 300);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_factor_is_stable_and_reproducible() {
        let spec = DgpSpec::default();
        assert!(linalg::spectral_radius(&spec.companion()) < 1.0);
        let a = simulate_factor(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = simulate_factor(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unstable_coefficients_are_rejected() {
        let spec = DgpSpec { ar_coefs: [0.9, 0.3, 0.1], ..Default::default() };
        assert!(matches!(
            simulate_factor(&spec, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::Explosive(_))
        ));
    }

    #[test]
    fn lag_one_autocorrelation_matches_yule_walker() {
        let spec = DgpSpec { n_obs: 100_000, ..Default::default() };
        let f = simulate_factor(&spec, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        // rho1 = b1 + b2 rho1 + b3 rho2, rho2 = b1 rho1 + b2 + b3 rho1
        let [b1, b2, b3] = spec.ar_coefs;
        let a = DMatrix::from_row_slice(2, 2, &[1.0 - b2, -b3, -(b1 + b3), 1.0]);
        let rhs = nalgebra::DVector::from_vec(vec![b1, b2]);
        let rho = a.lu().solve(&rhs).unwrap();
        let sample = linalg::correlation(&f[1..], &f[..f.len() - 1]);
        assert!((sample - rho[0]).abs() < 0.01, "{sample} vs {}", rho[0]);
    }

    #[test]
    fn unit_loadings_replicate_the_factor() {
        let f = vec![0.5, -1.0, 2.0];
        let x = measurement(DgpKind::Linear, &f, &[1.0; 4]);
        for t in 0..3 {
            assert!(x.row(t).iter().all(|&v| v == f[t]));
        }
    }

    #[test]
    fn tanh_panel_is_bounded() {
        let f: Vec<f64> = (0..50).map(|t| (t as f64 - 25.0) * 0.7).collect();
        let x = measurement(DgpKind::Tanh, &f, &[0.9, -0.9, 0.3]);
        assert!(x.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn kinds_share_loadings_and_noise() {
        let base = DgpSpec { n_obs: 40, n_vars: 5, ..Default::default() };
        let f = simulate_factor(&base, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let lin = simulate_panel(&f, &base, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let sq_spec = DgpSpec { kind: DgpKind::SquaredLoading, ..base.clone() };
        let sq = simulate_panel(&f, &sq_spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(lin.loadings, sq.loadings);
        assert_eq!(lin.idio_var, sq.idio_var);
        // linear panel with squared loadings, same noise
        let noise = &lin.x - measurement(DgpKind::Linear, &f, &lin.loadings);
        let b2: Vec<f64> = lin.loadings.iter().map(|b| b * b).collect();
        let expect = measurement(DgpKind::Linear, &f, &b2) + noise;
        assert!((expect - &sq.x).amax() < 1e-12);
    }
}
