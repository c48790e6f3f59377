//! Factor-augmented VAR with a sum-of-trees measurement equation.
//!
//! The Gibbs sampler cycles through: conjugate VAR draw on `Y = [Z, F]`,
//! one backfitting sweep per panel column, linear projection of the tree
//! fits onto `Y` to get approximate loadings, and a Carter-Kohn draw of the
//! latent factors. Factors are re-standardized and sign-aligned with the
//! principal components of the panel after every draw.

mod chain;
mod dump;
mod forecast;
mod kalman;
mod measurement;
mod panel;
mod var;

pub use chain::{
    gibbs_iteration, normalize_factors, run_chain, run_setup, ChainDraw, ChainResult, ChainSetup,
    Diagnostic, TraceRow,
};
pub use dump::{read_chain, write_chain};
pub use forecast::{
    forecast, one_step_factor_forecasts, simulate_paths, FactorScheme, ForecastEnsemble,
    ForecastOptions,
};
pub use kalman::{carter_kohn, kalman_filter, simulation_smoother, Filtered, StateInit, StateSpace};
pub use measurement::{
    project_loadings, sample_linear_equation, ForestMap, LinearMap, MeasurementMap,
};
pub use panel::{PanelData, Standardization};
pub use var::{
    ar1_calibration, build_dummy_observations, lagged_design, sample_var_coefficients,
    var_posterior, DummyObservations, VarCoefficients, VarPosterior,
};

use serde::{Deserialize, Serialize};

use crate::bart::BartPrior;
use crate::error::{Error, Result};

/// How the panel is linked to the factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    /// Sum of regression trees per column.
    Bart,
    /// Conjugate linear regression per column (standard FAVAR).
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FavarConfig {
    pub n_factors: usize,
    pub n_lags: usize,
    pub n_draws: usize,
    pub n_burn: usize,
    pub thin: usize,
    /// Leading observations used to calibrate the VAR prior.
    pub training_obs: usize,
    /// Exclude the training observations from the estimation sample.
    pub drop_training: bool,
    /// Overall tightness of the lag prior.
    pub iota: f64,
    /// Tightness of the sum-of-coefficients prior.
    pub lambda_soc: f64,
    /// Weight of the intercept dummy; small values leave the constant flat.
    pub constant_scale: f64,
    pub measurement: MeasurementKind,
    pub bart_prior: BartPrior,
    /// Keep every retained draw's forests (needed for nonlinear forecasts
    /// and impulse responses of the panel).
    pub store_forests: bool,
}

impl Default for FavarConfig {
    fn default() -> Self {
        FavarConfig {
            n_factors: 7,
            n_lags: 12,
            n_draws: 30_000,
            n_burn: 15_000,
            thin: 5,
            training_obs: 40,
            drop_training: true,
            iota: 0.1,
            lambda_soc: 1.0,
            constant_scale: 1e-4,
            measurement: MeasurementKind::Bart,
            bart_prior: BartPrior::default(),
            store_forests: true,
        }
    }
}

impl FavarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_draws {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than the number of draws {}",
                self.n_burn, self.n_draws
            )));
        }
        if self.thin == 0 || self.n_factors == 0 || self.n_lags == 0 {
            return Err(Error::Config("thin, n_factors and n_lags must be at least 1".into()));
        }
        if !(self.iota > 0.0) || !(self.lambda_soc > 0.0) || !(self.constant_scale > 0.0) {
            return Err(Error::Config("prior tightness parameters must be positive".into()));
        }
        self.bart_prior.validate()
    }

    /// Number of retained draws.
    pub fn n_retained(&self) -> usize {
        (self.n_draws - self.n_burn).div_ceil(self.thin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = FavarConfig::default();
        assert_eq!((c.n_factors, c.n_lags, c.n_draws, c.n_burn), (7, 12, 30_000, 15_000));
        assert!((c.lambda_soc - 10.0 * c.iota).abs() < 1e-12);
        assert_eq!(c.training_obs, 40);
        c.validate().unwrap();
    }

    #[test]
    fn burn_in_must_be_shorter_than_chain() {
        let c = FavarConfig {
            n_draws: 10,
            n_burn: 10,
            ..FavarConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = FavarConfig {
            n_draws: 10,
            n_burn: 5,
            thin: 1,
            ..FavarConfig::default()
        };
        assert_eq!(c.n_retained(), 5);
    }
}
