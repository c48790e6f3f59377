//! Conjugate VAR block: coefficient layout, dummy-observation prior and
//! posterior draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Stacked VAR coefficients `B` (K x M, K = M*L + 1) such that
/// `y_t' = [y_{t-1}', ..., y_{t-L}', 1] B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarCoefficients {
    pub n_vars: usize,
    pub n_lags: usize,
    pub b: DMatrix<f64>,
}

impl VarCoefficients {
    pub fn new(n_vars: usize, n_lags: usize, b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != n_vars * n_lags + 1 || b.ncols() != n_vars {
            return Err(Error::Dimension(format!(
                "coefficient matrix {}x{} for M={n_vars}, L={n_lags}",
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(VarCoefficients { n_vars, n_lags, b })
    }

    pub fn n_regressors(&self) -> usize {
        self.n_vars * self.n_lags + 1
    }

    /// Lag matrix `phi_l` (M x M) with `phi_l[i, j]` the effect of
    /// `y_{t-l, j}` on `y_{t, i}`; `lag` is 1-based.
    pub fn lag_matrix(&self, lag: usize) -> DMatrix<f64> {
        let m = self.n_vars;
        self.b.rows((lag - 1) * m, m).transpose()
    }

    pub fn intercept(&self) -> DVector<f64> {
        self.b.row(self.n_vars * self.n_lags).transpose()
    }

    /// Sum of the lag matrices.
    pub fn lag_sum(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.n_vars, self.n_vars);
        for l in 1..=self.n_lags {
            s += self.lag_matrix(l);
        }
        s
    }

    /// Companion matrix (M*L x M*L).
    pub fn companion(&self) -> DMatrix<f64> {
        let (m, l) = (self.n_vars, self.n_lags);
        let d = m * l;
        let mut a = DMatrix::zeros(d, d);
        for lag in 1..=l {
            a.view_mut((0, (lag - 1) * m), (m, m)).copy_from(&self.lag_matrix(lag));
        }
        for i in m..d {
            a[(i, i - m)] = 1.0;
        }
        a
    }

    /// Conditional mean of the next observation given the most recent `L`
    /// observations (`history[0]` is the latest).
    pub fn predict_next(&self, history: &[DVector<f64>]) -> DVector<f64> {
        let mut y = self.intercept();
        for (l, h) in history.iter().take(self.n_lags).enumerate() {
            y += self.lag_matrix(l + 1) * h;
        }
        y
    }

    /// Reduced-form residuals `u_t` for t = L..T of a T x M path.
    pub fn residuals(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (rx, ry) = lagged_design(y, self.n_lags)?;
        Ok(ry - rx * &self.b)
    }
}

/// Regressor matrix `[y_{t-1}, ..., y_{t-L}, 1]` and response rows for t = L..T.
pub fn lagged_design(y: &DMatrix<f64>, n_lags: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (t, m) = (y.nrows(), y.ncols());
    if t < n_lags {
        return Err(Error::Dimension(format!("{t} observations for {n_lags} lags")));
    }
    let rows = t - n_lags;
    let k = m * n_lags + 1;
    let mut x = DMatrix::zeros(rows, k);
    for r in 0..rows {
        let tt = r + n_lags;
        for l in 1..=n_lags {
            for j in 0..m {
                x[(r, (l - 1) * m + j)] = y[(tt - l, j)];
            }
        }
        x[(r, k - 1)] = 1.0;
    }
    Ok((x, y.rows(n_lags, rows).into_owned()))
}

/// Prior means (AR(1) coefficients) and scales (AR(1) residual standard
/// deviations) from a training window.
pub fn ar1_calibration(y: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = y.nrows();
    if t < 4 {
        return Err(Error::Config(format!("training sample of {t} rows is too short")));
    }
    let mut means = Vec::with_capacity(y.ncols());
    let mut scales = Vec::with_capacity(y.ncols());
    for j in 0..y.ncols() {
        let x = DMatrix::from_fn(t - 1, 2, |r, c| if c == 0 { 1.0 } else { y[(r, j)] });
        let resp = DMatrix::from_fn(t - 1, 1, |r, _| y[(r + 1, j)]);
        let coef = linalg::least_squares(&x, &resp)?;
        let resid = &resp - &x * &coef;
        let ssr: f64 = resid.iter().map(|v| v * v).sum();
        means.push(coef[(1, 0)]);
        scales.push((ssr / (t as f64 - 3.0)).sqrt());
    }
    Ok((means, scales))
}

/// Dummy-observation blocks implementing the Minnesota-style
/// normal-inverse-Wishart prior with a sum-of-coefficients component.
/// Rows are stacked as: lag tightness (M*L), covariance (M), constant (1),
/// sum of coefficients (M).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DummyObservations {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

/// `constant_scale` is the weight on the intercept dummy; a small value
/// gives an essentially flat prior on the constant.
pub fn build_dummy_observations(
    prior_means: &[f64],
    prior_scales: &[f64],
    iota: f64,
    lambda_soc: f64,
    n_lags: usize,
    constant_scale: f64,
) -> Result<DummyObservations> {
    let m = prior_means.len();
    if prior_scales.len() != m {
        return Err(Error::Dimension("prior means and scales differ in length".into()));
    }
    if let Some(j) = prior_scales.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::Config(format!(
            "degenerate prior scale {} for variable {j}",
            prior_scales[j]
        )));
    }
    if !(iota > 0.0) || !(lambda_soc > 0.0) || !(constant_scale > 0.0) {
        return Err(Error::Config("prior tightness parameters must be positive".into()));
    }
    let l = n_lags;
    let k = m * l + 1;
    let rows = m * l + m + 1 + m;
    let mut yd = DMatrix::zeros(rows, m);
    let mut xd = DMatrix::zeros(rows, k);
    for i in 0..m {
        yd[(i, i)] = prior_scales[i] * prior_means[i] / iota;
    }
    for lag in 1..=l {
        for i in 0..m {
            let r = (lag - 1) * m + i;
            xd[(r, r)] = lag as f64 * prior_scales[i] / iota;
        }
    }
    let off = m * l;
    for i in 0..m {
        yd[(off + i, i)] = prior_scales[i];
    }
    xd[(off + m, k - 1)] = constant_scale;
    let off = m * l + m + 1;
    for i in 0..m {
        let v = prior_scales[i] * prior_means[i] / lambda_soc;
        yd[(off + i, i)] = v;
        for lag in 1..=l {
            xd[(off + i, (lag - 1) * m + i)] = v;
        }
    }
    Ok(DummyObservations { y: yd, x: xd })
}

/// Matric-variate normal / inverse-Wishart posterior of the VAR:
/// `Sigma ~ IW(scale, df)`, `vec(B) | Sigma ~ N(vec(mean), Sigma ⊗ xtx_inv)`.
#[derive(Clone, Debug)]
pub struct VarPosterior {
    pub mean: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub scale: DMatrix<f64>,
    pub df: f64,
    pub n_lags: usize,
}

impl VarPosterior {
    /// Posterior mean of Sigma.
    pub fn sigma_mean(&self) -> DMatrix<f64> {
        let m = self.scale.nrows() as f64;
        &self.scale / (self.df - m - 1.0)
    }

    /// Posterior covariance of vec(B) (column-stacked), `E[Sigma] ⊗ xtx_inv`.
    pub fn coef_covariance(&self) -> DMatrix<f64> {
        self.sigma_mean().kronecker(&self.xtx_inv)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(VarCoefficients, DMatrix<f64>)> {
        let sigma = linalg::draw_inverse_wishart(&self.scale, self.df, rng)?;
        let lo = linalg::cholesky_lower(&self.xtx_inv, "VAR coefficient covariance")?;
        let ls = linalg::cholesky_lower(&sigma, "VAR innovation covariance")?;
        let z = linalg::standard_normal_matrix(self.mean.nrows(), self.mean.ncols(), rng);
        let b = &self.mean + lo * z * ls.transpose();
        let m = self.mean.ncols();
        Ok((VarCoefficients::new(m, self.n_lags, b)?, sigma))
    }
}

/// Posterior from OLS on the data stacked with the dummy observations.
pub fn var_posterior(
    y_path: &DMatrix<f64>,
    n_lags: usize,
    dummies: &DummyObservations,
) -> Result<VarPosterior> {
    let (x, y) = lagged_design(y_path, n_lags)?;
    let k = x.ncols();
    if dummies.x.ncols() != k || dummies.y.ncols() != y.ncols() {
        return Err(Error::Dimension("dummy blocks do not match the VAR dimension".into()));
    }
    let xs = stack(&x, &dummies.x);
    let ys = stack(&y, &dummies.y);
    let xtx = xs.transpose() * &xs;
    let xtx_inv = xtx.clone().try_inverse().ok_or_else(|| {
        Error::numerical(
            "VAR posterior",
            format!("singular cross-product ({} rows, {k} regressors)", xs.nrows()),
        )
    })?;
    let mean = &xtx_inv * xs.transpose() * &ys;
    let resid = &ys - &xs * &mean;
    let mut scale = resid.transpose() * resid;
    linalg::symmetrize(&mut scale);
    let df = (xs.nrows() - k) as f64;
    Ok(VarPosterior {
        mean,
        xtx_inv,
        scale,
        df,
        n_lags,
    })
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

/// One draw of `(B, Sigma)` from the conjugate posterior.
pub fn sample_var_coefficients<R: Rng + ?Sized>(
    y_path: &DMatrix<f64>,
    n_lags: usize,
    dummies: &DummyObservations,
    rng: &mut R,
) -> Result<(VarCoefficients, DMatrix<f64>)> {
    var_posterior(y_path, n_lags, dummies)?.draw(rng)
}
