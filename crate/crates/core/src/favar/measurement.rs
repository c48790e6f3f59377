use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use crate::bart::{Forest, SigmaPrior, TargetScale};
use crate::error::{Error, Result};
use crate::linalg;

/// Least-squares loadings of every panel column on the augmented factors:
/// returns `Ã` ((J+1) x N), the minimum-norm solution of `Y Ã = X`.
pub fn project_loadings(factors_aug: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if factors_aug.nrows() < factors_aug.ncols() {
        return Err(Error::Dimension(format!(
            "{} observations for {} factors",
            factors_aug.nrows(),
            factors_aug.ncols()
        )));
    }
    linalg::least_squares(factors_aug, x)
}

/// Map from the augmented factor vector to the standardized panel.
pub trait MeasurementMap: Sync {
    fn n_outputs(&self) -> usize;

    /// Rows of `y` are time points; returns the conditional mean of the
    /// standardized panel (rows x N).
    fn map(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// `X = Y Γ'` with Γ N x M.
pub struct LinearMap<'a> {
    pub loadings: &'a DMatrix<f64>,
}

impl MeasurementMap for LinearMap<'_> {
    fn n_outputs(&self) -> usize {
        self.loadings.nrows()
    }

    fn map(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.ncols() != self.loadings.ncols() {
            return Err(Error::Dimension("factor dimension differs from loadings".into()));
        }
        Ok(y * self.loadings.transpose())
    }
}

/// Sum-of-trees fits, one forest per panel column, back-mapped from the
/// unit interval to standardized units.
pub struct ForestMap<'a> {
    pub forests: &'a [Forest],
    pub scales: &'a [TargetScale],
}

impl MeasurementMap for ForestMap<'_> {
    fn n_outputs(&self) -> usize {
        self.forests.len()
    }

    fn map(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(y.nrows(), self.forests.len());
        for (j, (forest, scale)) in self.forests.iter().zip(self.scales).enumerate() {
            let fit = forest.predict(y)?;
            for (t, v) in fit.into_iter().enumerate() {
                out[(t, j)] = scale.from_unit(v);
            }
        }
        Ok(out)
    }
}

/// Conjugate draw for one linear measurement equation `x = Y γ + e`:
/// `σ² ~ (ν ξ + SSR) / χ²_{ν + T - M}`, then `γ ~ N(γ̂, σ² (Y'Y)⁻¹)`.
/// Returns `(γ, σ²)`.
pub fn sample_linear_equation<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    x: &[f64],
    prior: &SigmaPrior,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let (t, m) = y.shape();
    let xv = DMatrix::from_column_slice(t, 1, x);
    let yty_inv = (y.transpose() * y)
        .try_inverse()
        .ok_or_else(|| Error::numerical("linear measurement", "singular factor cross-product"))?;
    let coef = &yty_inv * y.transpose() * &xv;
    let resid = &xv - y * &coef;
    let ssr: f64 = resid.iter().map(|v| v * v).sum();
    let df = prior.nu + (t as f64 - m as f64).max(1.0);
    let chi = ChiSquared::new(df).map_err(|e| Error::numerical("linear measurement", e.to_string()))?;
    let sigma2 = (prior.nu * prior.xi + ssr) / chi.sample(rng);
    let l = linalg::cholesky_lower(&(yty_inv * sigma2), "linear measurement")?;
    let g = linalg::draw_mvn(&coef.column(0).into_owned(), &l, rng);
    Ok((g.iter().copied().collect(), sigma2))
}
