//! Small dense linear-algebra and sampling helpers shared by the samplers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

const PINV_EPS: f64 = 1e-12;

/// Minimum-norm least-squares solution of `x * b = y`.
pub fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension(format!(
            "least squares: {} regressor rows vs {} response rows",
            x.nrows(),
            y.nrows()
        )));
    }
    let svd = x.clone().svd(true, true);
    let tol = PINV_EPS * svd.singular_values.max().max(1.0) * x.nrows().max(x.ncols()) as f64;
    svd.solve(y, tol)
        .map_err(|e| Error::numerical("least squares", e.to_string()))
}

/// Moore-Penrose pseudo-inverse.
pub fn pseudo_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let tol = PINV_EPS * svd.singular_values.max().max(1.0) * x.nrows().max(x.ncols()) as f64;
    svd.pseudo_inverse(tol)
        .map_err(|e| Error::numerical("pseudo-inverse", e.to_string()))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor, retrying with a growing diagonal jitter.
pub fn cholesky_lower(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let mut a = m.clone();
    symmetrize(&mut a);
    if let Some(c) = a.clone().cholesky() {
        return Ok(c.l());
    }
    let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut jitter = 1e-12 * scale;
    for _ in 0..8 {
        let mut b = a.clone();
        for i in 0..b.nrows() {
            b[(i, i)] += jitter;
        }
        if let Some(c) = b.cholesky() {
            return Ok(c.l());
        }
        jitter *= 100.0;
    }
    Err(Error::numerical(context, "matrix is not positive definite"))
}

/// Square root `L` with `L Lᵀ = m` for a symmetric positive semi-definite
/// matrix; negative eigenvalues from rounding are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = m.clone();
    symmetrize(&mut a);
    let eig = a.symmetric_eigen();
    let mut v = eig.eigenvectors;
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..v.nrows() {
            v[(i, j)] *= s;
        }
    }
    v
}

pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Draw from N(mean, L Lᵀ) given a square-root factor `l`.
pub fn draw_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, l: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    mean + l * standard_normal_vector(l.ncols(), rng)
}

/// Inverse-Wishart draw with scale matrix `scale` and `df` degrees of freedom
/// (mean `scale / (df - m - 1)`), via the Bartlett decomposition of the
/// Wishart precision.
pub fn draw_inverse_wishart<R: Rng + ?Sized>(
    scale: &DMatrix<f64>,
    df: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let m = scale.nrows();
    if df <= (m as f64) - 1.0 {
        return Err(Error::numerical(
            "inverse-Wishart",
            format!("degrees of freedom {df} too small for dimension {m}"),
        ));
    }
    let scale_inv = scale
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("inverse-Wishart", "singular scale matrix"))?;
    let l = cholesky_lower(&scale_inv, "inverse-Wishart scale")?;
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::numerical("inverse-Wishart", e.to_string()))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = &l * &a;
    let w = &la * la.transpose();
    let mut sigma = w
        .try_inverse()
        .ok_or_else(|| Error::numerical("inverse-Wishart", "singular Wishart draw"))?;
    symmetrize(&mut sigma);
    Ok(sigma)
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len().saturating_sub(1).max(1)) as f64).sqrt()
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Column means and sample standard deviations.
pub fn column_moments(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let v: Vec<f64> = col.iter().copied().collect();
        means.push(mean(&v));
        sds.push(std_dev(&v));
    }
    (means, sds)
}

/// Standardize columns to mean 0 and unit variance. Constant columns are
/// only centred.
pub fn standardize_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let (means, mut sds) = column_moments(x);
    for s in sds.iter_mut() {
        if *s <= 0.0 || !s.is_finite() {
            *s = 1.0;
        }
    }
    let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - means[j]) / sds[j]);
    (z, means, sds)
}

/// First `k` principal-component scores of an already standardized panel,
/// each rescaled to unit sample variance. Signs follow the convention that
/// the largest-magnitude loading of each component is positive.
pub fn principal_components(x: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > x.ncols().min(x.nrows()) {
        return Err(Error::Dimension(format!(
            "cannot extract {k} components from a {}x{} panel",
            x.nrows(),
            x.ncols()
        )));
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let vt = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut scores = DMatrix::zeros(x.nrows(), k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        let loading = vt.row(idx);
        let (mut best, mut best_abs) = (0.0, -1.0);
        for &v in loading.iter() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = v;
            }
        }
        let sign = if best < 0.0 { -1.0 } else { 1.0 };
        let col: Vec<f64> = u.column(idx).iter().map(|v| v * sign).collect();
        let m = mean(&col);
        let s = std_dev(&col).max(1e-300);
        for t in 0..x.nrows() {
            scores[(t, c)] = (col[t] - m) / s;
        }
    }
    Ok(scores)
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = standard_normal_matrix(40, 3, &mut rng);
        let y = standard_normal_matrix(40, 2, &mut rng);
        let b = least_squares(&x, &y).unwrap();
        let xtx = x.transpose() * &x;
        let b2 = xtx.try_inverse().unwrap() * x.transpose() * &y;
        assert!((b - b2).abs().max() < 1e-10);
    }

    #[test]
    fn psd_sqrt_reconstructs_singular_matrix() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let m = &v * v.transpose();
        let l = psd_sqrt(&m);
        assert!((&l * l.transpose() - m).abs().max() < 1e-10);
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let df = 12.0;
        let n = 20_000;
        let mut acc = DMatrix::zeros(2, 2);
        for _ in 0..n {
            acc += draw_inverse_wishart(&scale, df, &mut rng).unwrap();
        }
        acc /= n as f64;
        let expected = &scale / (df - 3.0);
        assert!((acc - expected).abs().max() < 0.01);
    }

    #[test]
    fn spectral_radius_of_ar1_companion() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 1.0, 0.0]);
        let r = spectral_radius(&m);
        let expected = (0.5 + (0.25f64 + 1.2).sqrt()) / 2.0;
        assert!((r - expected).abs() < 1e-12);
    }
}
