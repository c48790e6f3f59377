use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Column means and scales used to standardize the panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_means: Vec<f64>,
    pub x_scales: Vec<f64>,
    pub z_mean: Option<f64>,
    pub z_scale: Option<f64>,
}

impl Standardization {
    pub fn x_to_original(&self, j: usize, v: f64) -> f64 {
        v * self.x_scales[j] + self.x_means[j]
    }

    pub fn z_to_original(&self, v: f64) -> f64 {
        v * self.z_scale.unwrap_or(1.0) + self.z_mean.unwrap_or(0.0)
    }
}

/// T x N observables plus an optional observed factor, in transformed
/// (stationary) units, together with their standardized copies.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelData {
    pub dates: Vec<String>,
    pub names: Vec<String>,
    pub transform_codes: Vec<i32>,
    pub z_name: Option<String>,
    x: DMatrix<f64>,
    z: Option<Vec<f64>>,
    x_std: DMatrix<f64>,
    z_std: Option<Vec<f64>>,
    standardization: Standardization,
}

impl PanelData {
    pub fn new(
        x: DMatrix<f64>,
        z: Option<Vec<f64>>,
        names: Vec<String>,
        z_name: Option<String>,
        dates: Vec<String>,
        transform_codes: Vec<i32>,
    ) -> Result<Self> {
        let (t, n) = (x.nrows(), x.ncols());
        if names.len() != n {
            return Err(Error::Dimension(format!("{} names for {n} columns", names.len())));
        }
        if !dates.is_empty() && dates.len() != t {
            return Err(Error::Dimension(format!("{} dates for {t} rows", dates.len())));
        }
        if !transform_codes.is_empty() && transform_codes.len() != n {
            return Err(Error::Dimension(format!(
                "{} transform codes for {n} columns",
                transform_codes.len()
            )));
        }
        if let Some(z) = &z {
            if z.len() != t {
                return Err(Error::Dimension(format!("observed factor has {} rows, panel {t}", z.len())));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data("observed factor contains missing values".into()));
            }
        }
        if let Some((i, j)) = (0..t)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| !x[(i, j)].is_finite())
        {
            return Err(Error::Data(format!("missing value for {} at row {i}", names[j])));
        }
        let (x_std, x_means, x_scales) = linalg::standardize_columns(&x);
        let (z_std, z_mean, z_scale) = match &z {
            Some(z) => {
                let m = linalg::mean(z);
                let s = linalg::std_dev(z);
                let s = if s > 0.0 { s } else { 1.0 };
                (Some(z.iter().map(|v| (v - m) / s).collect()), Some(m), Some(s))
            }
            None => (None, None, None),
        };
        Ok(PanelData {
            dates,
            names,
            transform_codes,
            z_name,
            x,
            z,
            x_std,
            z_std,
            standardization: Standardization {
                x_means,
                x_scales,
                z_mean,
                z_scale,
            },
        })
    }

    /// Panel without dates, codes or observed factor.
    pub fn from_matrix(x: DMatrix<f64>) -> Result<Self> {
        let names = (0..x.ncols()).map(|j| format!("x{}", j + 1)).collect();
        PanelData::new(x, None, names, None, Vec::new(), Vec::new())
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.x.ncols()
    }

    pub fn has_observed_factor(&self) -> bool {
        self.z.is_some()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> Option<&[f64]> {
        self.z.as_deref()
    }

    pub fn x_standardized(&self) -> &DMatrix<f64> {
        &self.x_std
    }

    pub fn z_standardized(&self) -> Option<&[f64]> {
        self.z_std.as_deref()
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// Map a standardized panel back to original units.
    pub fn destandardize(&self, x_std: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x_std.nrows(), x_std.ncols(), |i, j| {
            self.standardization.x_to_original(j, x_std[(i, j)])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standardize_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = linalg::standard_normal_matrix(30, 4, &mut rng).map(|v| 3.0 * v + 7.0);
        let p = PanelData::from_matrix(raw.clone()).unwrap();
        let back = p.destandardize(p.x_standardized());
        assert!((back - raw).abs().max() < 1e-10);
        let (m, s) = linalg::column_moments(p.x_standardized());
        for j in 0..4 {
            assert!(m[j].abs() < 1e-12);
            assert!((s[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_values_are_rejected() {
        let mut x = DMatrix::from_element(3, 2, 1.0);
        x[(1, 1)] = f64::NAN;
        assert!(matches!(PanelData::from_matrix(x), Err(Error::Data(_))));
    }
}
