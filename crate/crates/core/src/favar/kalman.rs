//! Kalman filtering and Carter-Kohn simulation smoothing for the factor
//! state space. The state is the companion vector
//! `s_t = [Y_t, Y_{t-1}, ..., Y_{t-L+1}]`; panel observations load on the
//! first block only, and an observed factor (if any) is the first element of
//! `Y_t`, measured without noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::var::VarCoefficients;
use crate::error::{Error, Result};
use crate::linalg;

/// Measurement and transition parameters of one Gibbs draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    /// N x M loadings of the standardized panel on `Y_t`.
    pub loadings: DMatrix<f64>,
    /// Measurement error variances (length N).
    pub meas_var: Vec<f64>,
    pub var: VarCoefficients,
    pub innov_cov: DMatrix<f64>,
    /// Whether `Y_t` starts with an observed factor.
    pub observed_factor: bool,
}

impl StateSpace {
    pub fn n_states(&self) -> usize {
        self.var.n_vars
    }

    /// Loading matrix including the unit row of the observed factor.
    pub fn full_loadings(&self) -> DMatrix<f64> {
        if !self.observed_factor {
            return self.loadings.clone();
        }
        let (n, m) = self.loadings.shape();
        let mut g = DMatrix::zeros(n + 1, m);
        g[(0, 0)] = 1.0;
        g.rows_mut(1, n).copy_from(&self.loadings);
        g
    }

    pub fn validate(&self, n_vars: usize) -> Result<()> {
        let m = self.var.n_vars;
        if self.loadings.shape() != (n_vars, m) || self.meas_var.len() != n_vars {
            return Err(Error::Dimension(format!(
                "loadings {:?} / {} variances for N={n_vars}, M={m}",
                self.loadings.shape(),
                self.meas_var.len()
            )));
        }
        if self.innov_cov.shape() != (m, m) {
            return Err(Error::Dimension("innovation covariance shape".into()));
        }
        if let Some(j) = self.meas_var.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::numerical(
                "state space",
                format!("measurement variance {} for variable {j}", self.meas_var[j]),
            ));
        }
        Ok(())
    }
}

/// Prior on the initial companion state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateInit {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl StateInit {
    pub fn standard(dim: usize) -> Self {
        StateInit {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
        }
    }
}

/// Filtered means and covariances of the companion state.
#[derive(Clone, Debug)]
pub struct Filtered {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

fn check_inputs(state: &StateSpace, x: &DMatrix<f64>, z: Option<&[f64]>) -> Result<()> {
    state.validate(x.ncols())?;
    match (state.observed_factor, z) {
        (true, Some(z)) if z.len() == x.nrows() => Ok(()),
        (true, Some(z)) => Err(Error::Dimension(format!(
            "observed factor has {} rows, panel {}",
            z.len(),
            x.nrows()
        ))),
        (true, None) => Err(Error::Dimension("state space expects an observed factor".into())),
        (false, Some(_)) => Err(Error::Dimension("unexpected observed factor".into())),
        (false, None) => Ok(()),
    }
}

/// Forward Kalman filter. The panel update avoids N x N inversions by
/// working with `G = Γ'R⁻¹Γ` (M x M).
pub fn kalman_filter(
    state: &StateSpace,
    x: &DMatrix<f64>,
    z: Option<&[f64]>,
    init: &StateInit,
) -> Result<Filtered> {
    check_inputs(state, x, z)?;
    let (t_len, n) = x.shape();
    let m = state.var.n_vars;
    let d = m * state.var.n_lags;
    if init.mean.len() != d || init.cov.shape() != (d, d) {
        return Err(Error::Dimension(format!("initial state must have dimension {d}")));
    }
    let a = state.var.companion();
    let c = state.var.intercept();
    let gamma = &state.loadings;
    let rinv: Vec<f64> = state.meas_var.iter().map(|v| 1.0 / v).collect();
    let mut gt_rinv = gamma.transpose();
    for j in 0..n {
        for i in 0..m {
            gt_rinv[(i, j)] *= rinv[j];
        }
    }
    let g = &gt_rinv * gamma;
    let mut q = DMatrix::zeros(d, d);
    q.view_mut((0, 0), (m, m)).copy_from(&state.innov_cov);

    let mut means = Vec::with_capacity(t_len);
    let mut covs = Vec::with_capacity(t_len);
    let mut beta = init.mean.clone();
    let mut p = init.cov.clone();
    let mut loglik = 0.0;
    let log_det_r: f64 = state.meas_var.iter().map(|v| v.ln()).sum();
    for t in 0..t_len {
        if t > 0 {
            let mut nb = &a * &beta;
            for i in 0..m {
                nb[i] += c[i];
            }
            beta = nb;
            p = &a * &p * a.transpose() + &q;
            linalg::symmetrize(&mut p);
        }
        if let Some(z) = z {
            let pzz = p[(0, 0)];
            if pzz > 1e-12 {
                let k = p.column(0) / pzz;
                let v = z[t] - beta[0];
                loglik += -0.5 * ((2.0 * std::f64::consts::PI * pzz).ln() + v * v / pzz);
                beta += &k * v;
                let pc = p.column(0).into_owned();
                p -= &k * pc.transpose();
                linalg::symmetrize(&mut p);
            }
        }
        let xt = x.row(t).transpose();
        let pred = gamma * beta.rows(0, m);
        let v = xt - pred;
        let ce = p.columns(0, m).into_owned();
        let pe = p.view((0, 0), (m, m)).into_owned();
        let w = (DMatrix::identity(m, m) + &g * &pe).try_inverse().ok_or_else(|| {
            Error::numerical("Kalman filter", format!("singular update matrix at t={t}"))
        })?;
        let gv = &gt_rinv * &v;
        beta += &ce * (&w * &gv);
        p -= &ce * &w * &g * ce.transpose();
        linalg::symmetrize(&mut p);
        if (0..d).any(|i| p[(i, i)] < -1e-8 || !p[(i, i)].is_finite()) {
            return Err(Error::numerical(
                "Kalman filter",
                format!("covariance lost positive definiteness at t={t}"),
            ));
        }
        // log N(v; 0, ΓPΓ' + R) via the matrix determinant lemma
        let det = (DMatrix::identity(m, m) + &g * &pe).determinant();
        let rinv_v: f64 = (0..n).map(|j| v[j] * v[j] * rinv[j]).sum();
        let quad = rinv_v - (gv.transpose() * &pe * &w * &gv)[(0, 0)];
        loglik += -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_r + det.ln() + quad);
        means.push(beta.clone());
        covs.push(p.clone());
    }
    Ok(Filtered {
        means,
        covs,
        log_likelihood: loglik,
    })
}

/// Forward filtering, backward sampling of the full `Y` path (T x M).
/// Each backward step conditions on the first block of the following
/// state, so the draw is exact for one lag.
pub fn simulation_smoother<R: Rng + ?Sized>(
    state: &StateSpace,
    x: &DMatrix<f64>,
    z: Option<&[f64]>,
    init: &StateInit,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let filt = kalman_filter(state, x, z, init)?;
    let t_len = x.nrows();
    let m = state.var.n_vars;
    let mut y = DMatrix::zeros(t_len, m);
    if t_len == 0 {
        return Ok(y);
    }
    let last = t_len - 1;
    let draw_block = |mean: DVector<f64>, cov: DMatrix<f64>, rng: &mut R| -> DVector<f64> {
        let l = linalg::psd_sqrt(&cov);
        linalg::draw_mvn(&mean, &l, rng)
    };
    let top = draw_block(
        filt.means[last].rows(0, m).into_owned(),
        filt.covs[last].view((0, 0), (m, m)).into_owned(),
        rng,
    );
    y.row_mut(last).copy_from(&top.transpose());
    let phi = state.var.companion().rows(0, m).into_owned();
    let c = state.var.intercept();
    for t in (0..last).rev() {
        let b = &filt.means[t];
        let p = &filt.covs[t];
        let pf = p * phi.transpose();
        let mut s = &phi * &pf + &state.innov_cov;
        linalg::symmetrize(&mut s);
        let s_inv = s.try_inverse().ok_or_else(|| {
            Error::numerical("Carter-Kohn", format!("singular backward covariance at t={t}"))
        })?;
        let next = y.row(t + 1).transpose();
        let innov = next - &c - &phi * b;
        let pf_e = pf.rows(0, m).into_owned();
        let k = &pf_e * &s_inv;
        let mean = b.rows(0, m) + &k * innov;
        let cov = p.view((0, 0), (m, m)) - &k * pf_e.transpose();
        let draw = draw_block(mean, cov, rng);
        y.row_mut(t).copy_from(&draw.transpose());
    }
    if let Some(z) = z {
        for t in 0..t_len {
            y[(t, 0)] = z[t];
        }
    }
    Ok(y)
}

/// Draw of the latent factors (T x J), dropping the observed-factor column.
pub fn carter_kohn<R: Rng + ?Sized>(
    state: &StateSpace,
    x: &DMatrix<f64>,
    z: Option<&[f64]>,
    init: &StateInit,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let y = simulation_smoother(state, x, z, init, rng)?;
    let skip = usize::from(state.observed_factor);
    Ok(y.columns(skip, y.ncols() - skip).into_owned())
}
