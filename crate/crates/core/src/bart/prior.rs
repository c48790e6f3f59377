use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// How the terminal-node prior standard deviation is set. Targets are
/// rescaled to `[-0.5, 0.5]` in both cases.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeafScale {
    /// `0.5 / (kappa * sqrt(S))`.
    Kappa,
    /// `range / (2 * sqrt(nu * S))` with the rescaled range equal to 1.
    RangeRootNuS { nu: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BartPrior {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub n_trees: usize,
    /// Error-variance degrees of freedom; `None` means `T / 2`.
    pub nu: Option<f64>,
    /// Prior probability that sigma lies below the linear-regression estimate.
    pub quantile_v: f64,
    pub leaf_scale: LeafScale,
}

impl Default for BartPrior {
    fn default() -> Self {
        BartPrior {
            alpha: 0.95,
            beta: 2.0,
            kappa: 2.0,
            n_trees: 250,
            nu: None,
            quantile_v: 0.75,
            leaf_scale: LeafScale::Kappa,
        }
    }
}

impl BartPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if self.beta <= 0.0 || self.kappa <= 0.0 {
            return Err(Error::Config("beta and kappa must be positive".into()));
        }
        if !(self.quantile_v > 0.0 && self.quantile_v < 1.0) {
            return Err(Error::Config(format!(
                "quantile_v {} not in (0,1)",
                self.quantile_v
            )));
        }
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if let Some(nu) = self.nu {
            if nu <= 0.0 {
                return Err(Error::Config("nu must be positive".into()));
            }
        }
        if let LeafScale::RangeRootNuS { nu } = self.leaf_scale {
            if nu <= 0.0 {
                return Err(Error::Config("leaf-scale nu must be positive".into()));
            }
        }
        Ok(())
    }

    /// Prior probability that a node at `depth` is split.
    pub fn split_probability(&self, depth: usize) -> f64 {
        node_split_probability(depth, self)
    }

    pub fn leaf_sd(&self) -> f64 {
        let s = self.n_trees as f64;
        match self.leaf_scale {
            LeafScale::Kappa => 0.5 / (self.kappa * s.sqrt()),
            LeafScale::RangeRootNuS { nu } => 1.0 / (2.0 * (nu * s).sqrt()),
        }
    }

    pub fn sigma_df(&self, n_obs: usize) -> f64 {
        self.nu.unwrap_or(n_obs as f64 / 2.0)
    }
}

pub fn node_split_probability(depth: usize, prior: &BartPrior) -> f64 {
    prior.alpha * (1.0 + depth as f64).powf(-prior.beta)
}

/// Scaled inverse chi-square prior `sigma^2 ~ nu * xi / chi2_nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaPrior {
    pub nu: f64,
    pub xi: f64,
}

impl SigmaPrior {
    /// Pick `xi` so that `P(sigma < sigma_hat) = quantile`.
    pub fn calibrate(sigma_hat: f64, nu: f64, quantile: f64) -> Result<Self> {
        if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
            return Err(Error::numerical(
                "sigma prior calibration",
                format!("non-positive reference sigma {sigma_hat}"),
            ));
        }
        let chi = ChiSquared::new(nu)
            .map_err(|e| Error::numerical("sigma prior calibration", e.to_string()))?;
        // P(chi2 > nu xi / sigma_hat^2) = quantile
        let q = chi.inverse_cdf(1.0 - quantile);
        Ok(SigmaPrior {
            nu,
            xi: sigma_hat * sigma_hat * q / nu,
        })
    }

    /// Prior CDF of sigma.
    pub fn cdf(&self, sigma: f64) -> f64 {
        let chi = ChiSquared::new(self.nu).expect("positive df");
        1.0 - chi.cdf(self.nu * self.xi / (sigma * sigma))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn split_probability_values() {
        let p = BartPrior::default();
        assert_relative_eq!(node_split_probability(0, &p), 0.95);
        assert_relative_eq!(node_split_probability(1, &p), 0.2375);
        let q = BartPrior {
            alpha: 0.5,
            beta: 1.0,
            ..BartPrior::default()
        };
        assert_relative_eq!(node_split_probability(3, &q), 0.125);
    }

    #[test]
    fn default_leaf_sd_matches_kappa_rule() {
        let p = BartPrior::default();
        assert_relative_eq!(p.leaf_sd(), 0.5 / (2.0 * 250f64.sqrt()));
        let q = BartPrior {
            leaf_scale: LeafScale::RangeRootNuS { nu: 4.0 },
            ..p
        };
        assert_relative_eq!(q.leaf_sd(), p.leaf_sd(), epsilon = 1e-15);
    }

    #[test]
    fn calibrated_prior_hits_quantile() {
        let sp = SigmaPrior::calibrate(0.7, 150.0, 0.75).unwrap();
        assert_relative_eq!(sp.cdf(0.7), 0.75, epsilon = 1e-9);
    }

    #[test]
    fn validation_rejects_bad_alpha() {
        let p = BartPrior {
            alpha: 1.2,
            ..BartPrior::default()
        };
        assert!(p.validate().is_err());
    }
}
