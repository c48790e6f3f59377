use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::favar::VarCoefficients;
use crate::linalg;

/// Instrument series with its own dates; align it to a sample before use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub dates: Vec<String>,
    pub values: Vec<f64>,
}

impl Instrument {
    pub fn availability(&self) -> Option<(&str, &str)> {
        Some((self.dates.first()?.as_str(), self.dates.last()?.as_str()))
    }

    /// Instrument value for each sample date, `None` outside its window.
    pub fn align(&self, sample_dates: &[String]) -> Vec<Option<f64>> {
        let lookup: std::collections::HashMap<&str, f64> = self
            .dates
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
            .filter(|(_, v)| v.is_finite())
            .collect();
        sample_dates.iter().map(|d| lookup.get(d.as_str()).copied()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyOptions {
    pub min_overlap: usize,
    /// Smallest acceptable first-stage F statistic.
    pub min_first_stage_f: f64,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        ProxyOptions {
            min_overlap: 24,
            min_first_stage_f: 10.0,
        }
    }
}

/// Identified impact column of one posterior draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralDraw {
    /// Impact of the instrumented shock, normalized so the first entry is 1.
    pub impact_column: DVector<f64>,
    /// R² of the instrument on the reduced-form residuals.
    pub rho_sq: f64,
    pub first_stage_f: f64,
    pub n_overlap: usize,
}

impl StructuralDraw {
    /// Impact scaled so the first variable moves by `size` (in the units of
    /// the residuals).
    pub fn scaled(&self, size: f64) -> DVector<f64> {
        &self.impact_column * size
    }
}

fn simple_regression(y: &[f64], x: &[f64]) -> (f64, f64, f64) {
    // slope, residual variance, slope variance
    let n = y.len() as f64;
    let mx = linalg::mean(x);
    let my = linalg::mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let s2 = ssr / (n - 2.0).max(1.0);
    let var_slope = if sxx > 0.0 { s2 / sxx } else { f64::INFINITY };
    (slope, s2, var_slope)
}

/// Frequentist proxy identification: regress each residual column on the
/// instrument over the overlap and normalize by the first slope.
pub fn instrument_impact(
    residuals: &DMatrix<f64>,
    instrument: &[Option<f64>],
    options: &ProxyOptions,
) -> Result<StructuralDraw> {
    if instrument.len() != residuals.nrows() {
        return Err(Error::Dimension(format!(
            "instrument has {} rows, residuals {}",
            instrument.len(),
            residuals.nrows()
        )));
    }
    let rows: Vec<usize> = (0..instrument.len()).filter(|&t| instrument[t].is_some()).collect();
    let n = rows.len();
    if n < options.min_overlap {
        return Err(Error::Data(format!(
            "instrument overlaps the residual sample in {n} observations, need {}",
            options.min_overlap
        )));
    }
    let m: Vec<f64> = rows.iter().map(|&t| instrument[t].unwrap()).collect();
    let k = residuals.ncols();
    let mut slopes = DVector::zeros(k);
    let mut first_stage_f = 0.0;
    for i in 0..k {
        let u: Vec<f64> = rows.iter().map(|&t| residuals[(t, i)]).collect();
        let (b, _, vb) = simple_regression(&u, &m);
        slopes[i] = b;
        if i == 0 {
            first_stage_f = if vb > 0.0 && vb.is_finite() {
                b * b / vb
            } else if vb == 0.0 && b != 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
        }
    }
    if !(first_stage_f >= options.min_first_stage_f) || slopes[0] == 0.0 {
        return Err(Error::WeakInstrument {
            first_stage_f,
            n_obs: n,
        });
    }
    let impact_column = &slopes / slopes[0];

    // R² of the instrument on all residuals
    let mut xr = DMatrix::from_element(n, k + 1, 1.0);
    for (r, &t) in rows.iter().enumerate() {
        for i in 0..k {
            xr[(r, i + 1)] = residuals[(t, i)];
        }
    }
    let mv = DMatrix::from_column_slice(n, 1, &m);
    let coef = linalg::least_squares(&xr, &mv)?;
    let fit = &xr * coef;
    let mm = linalg::mean(&m);
    let tss: f64 = m.iter().map(|v| (v - mm).powi(2)).sum();
    let ess: f64 = fit.iter().map(|v| (v - mm).powi(2)).sum();
    let rho_sq = if tss > 0.0 { (ess / tss).clamp(0.0, 1.0) } else { 0.0 };
    Ok(StructuralDraw {
        impact_column,
        rho_sq,
        first_stage_f,
        n_overlap: n,
    })
}

/// Signal share of the instrument variance, `β² / (β² + σ²)`.
pub fn reliability(beta: f64, sigma: f64) -> Result<f64> {
    let d = beta * beta + sigma * sigma;
    if d == 0.0 {
        return Err(Error::Config("reliability undefined when beta and sigma are both zero".into()));
    }
    Ok(beta * beta / d)
}

/// Stationary mean `(I - Σ φ_l)⁻¹ c`; explosive draws are rejected.
pub fn long_run_mean(var: &VarCoefficients) -> Result<DVector<f64>> {
    let radius = linalg::spectral_radius(&var.companion());
    if !(radius < 1.0) {
        return Err(Error::Explosive(radius));
    }
    let m = var.n_vars;
    let a = DMatrix::identity(m, m) - var.lag_sum();
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::numerical("long-run mean", "I - sum of lag matrices is singular"))?;
    Ok(inv * var.intercept())
}

/// Impulse response of a linear VAR to an impact vector, horizons 0..=k
/// (rows).
pub fn impulse_response(var: &VarCoefficients, impact: &DVector<f64>, k: usize) -> DMatrix<f64> {
    let m = var.n_vars;
    let a = var.companion();
    let mut s = DVector::zeros(m * var.n_lags);
    s.rows_mut(0, m).copy_from(impact);
    let mut out = DMatrix::zeros(k + 1, m);
    for h in 0..=k {
        out.row_mut(h).copy_from(&s.rows(0, m).transpose());
        s = &a * s;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reliability_cases() {
        assert!((reliability(1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(reliability(2.0, 0.0).unwrap(), 1.0);
        assert_eq!(reliability(0.0, 3.0).unwrap(), 0.0);
        assert!(reliability(0.0, 0.0).is_err());
    }

    #[test]
    fn univariate_long_run_mean() {
        let v = VarCoefficients::new(1, 1, DMatrix::from_row_slice(2, 1, &[0.5, 0.5])).unwrap();
        assert!((long_run_mean(&v).unwrap()[0] - 1.0).abs() < 1e-12);
        let v = VarCoefficients::new(1, 1, DMatrix::from_row_slice(2, 1, &[0.5, 0.0])).unwrap();
        assert_eq!(long_run_mean(&v).unwrap()[0], 0.0);
        let v = VarCoefficients::new(1, 1, DMatrix::from_row_slice(2, 1, &[1.02, 0.1])).unwrap();
        assert!(matches!(long_run_mean(&v), Err(Error::Explosive(_))));
    }

    #[test]
    fn noise_instrument_is_weak() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = linalg::standard_normal_matrix(200, 3, &mut rng);
        let m: Vec<Option<f64>> = linalg::standard_normal_vector(200, &mut rng).iter().map(|&v| Some(v)).collect();
        assert!(matches!(
            instrument_impact(&u, &m, &ProxyOptions::default()),
            Err(Error::WeakInstrument { .. })
        ));
    }

    #[test]
    fn exact_instrument_recovers_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 0.8, 0.0, -0.7, 0.2, 0.6]);
        let e = linalg::standard_normal_matrix(500, 3, &mut rng);
        let u = &e * a.transpose();
        let m: Vec<Option<f64>> = (0..500).map(|t| Some(e[(t, 0)])).collect();
        let d = instrument_impact(&u, &m, &ProxyOptions::default()).unwrap();
        assert_eq!(d.impact_column[0], 1.0);
        assert!((d.impact_column[1] - 0.5).abs() < 0.12);
        assert!((d.impact_column[2] + 0.7).abs() < 0.12);
        assert!((d.rho_sq - 1.0).abs() < 1e-10);
    }

    #[test]
    fn short_overlap_is_rejected() {
        let u = DMatrix::zeros(30, 2);
        let m: Vec<Option<f64>> = (0..30).map(|t| if t < 10 { Some(t as f64) } else { None }).collect();
        assert!(matches!(instrument_impact(&u, &m, &ProxyOptions::default()), Err(Error::Data(_))));
    }

    #[test]
    fn alignment_by_date() {
        let inst = Instrument {
            dates: vec!["2000-02-01".into(), "2000-03-01".into()],
            values: vec![1.5, -0.5],
        };
        let dates: Vec<String> = ["2000-01-01", "2000-02-01", "2000-03-01"].iter().map(|s| s.to_string()).collect();
        assert_eq!(inst.align(&dates), vec![None, Some(1.5), Some(-0.5)]);
        assert_eq!(inst.availability(), Some(("2000-02-01", "2000-03-01")));
    }

    #[test]
    fn impulse_response_of_ar1() {
        let v = VarCoefficients::new(1, 1, DMatrix::from_row_slice(2, 1, &[0.5, 3.0])).unwrap();
        let r = impulse_response(&v, &DVector::from_vec(vec![2.0]), 3);
        assert_eq!(r.column(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0, 0.5, 0.25]);
    }
}
