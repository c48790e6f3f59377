//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Run a subset with `cargo test --test acceptance -- 4 5`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fabart::bart::{
    log_marginal_likelihood, prior_only_step, propose_move, BartPrior, MoveKind, RegressionTree,
    SplitRule, SplitSpace,
};
use fabart::data::{load_panel, RunConfig};
use fabart::eval::{evaluate, log_score, EnsembleRecord, EvalOptions, KdeOptions, RealizedRecord};
use fabart::favar::{
    build_dummy_observations, carter_kohn, lagged_design, var_posterior, FavarConfig, LinearMap,
    StateInit, StateSpace, VarCoefficients,
};
use fabart::identify::{impulse_response, instrument_impact, long_run_mean, simulate_girf, DrawSystem, ProxyOptions};
use fabart::linalg;
use fabart::sim::{
    experiment_chain, monte_carlo, recursive_forecast_experiment, DgpKind, ExperimentConfig,
    ExperimentResult, MonteCarloConfig,
};
use fabart::favar::FactorScheme;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

// criterion 1
const RATIO_BAND: (f64, f64) = (0.59, 0.71);
const FABART_FAVAR_SLACK: f64 = 0.01;
const EXPERIMENT_SEED: u64 = 20_240_101;
// criterion 2
const MC_REPS: usize = 20;
const MC_DRAWS: usize = 200;
const MC_BURN: usize = 100;
const MC_MIN_CORR_LINEAR: f64 = 0.95;
const MC_MIN_CORR_NONLINEAR: f64 = 0.93;
const MC_MAX_ERROR_MEAN: f64 = 0.05;
// criterion 3
const MAX_RELATIVE_EXCESS: f64 = 0.02;
// criterion 4
const CK_DRAWS: usize = 10_000;
const CK_SE_MULTIPLE: f64 = 2.0;
// criterion 5
const NIW_TOL: f64 = 1e-8;
// criterion 6
const TREE_SWEEPS: usize = 100_000;
const TREE_CHAINS: usize = 20;
const TREE_THIN: usize = 100;
const MIN_GOF_P: f64 = 0.01;
const N_PROPOSALS: usize = 10_000;
const MOVE_FREQ_TOL: f64 = 0.02;
// criterion 7
const QUAD_TOL: f64 = 1e-4;
// criterion 8
const GIRF_SE_MULTIPLE: f64 = 3.0;
const GIRF_N_SIM: usize = 500;
// criterion 9
const PROXY_T: usize = 2000;
const PROXY_REL_TOL: f64 = 0.05;
// criterion 10
const KDE_DRAWS: usize = 100_000;
const KDE_TOL: f64 = 0.02;
// criterion 11
const CLI_BUDGET: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |k: u32| selected.is_empty() || selected.contains(&k);
    let mut experiment: Option<ExperimentResult> = None;
    let mut failed = Vec::new();
    let mut report = |k: u32, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {k:>2} [{name}]: {tag} {}", o.detail);
        if !o.pass {
            failed.push(k);
        }
    };
    if wants(1) || wants(3) {
        let t = Instant::now();
        let r = recursive_forecast_experiment(&ExperimentConfig::default(), &mut ChaCha8Rng::seed_from_u64(EXPERIMENT_SEED))
            .expect("forecast experiment");
        println!("  (forecast experiment took {:.0?})", t.elapsed());
        experiment = Some(r);
    }
    if wants(1) {
        report(1, "factor forecast ratios", criterion_1(experiment.as_ref().unwrap()));
    }
    if wants(2) {
        report(2, "factor recovery", criterion_2());
    }
    if wants(3) {
        report(3, "no spurious nonlinearity", criterion_3(experiment.as_ref().unwrap()));
    }
    if wants(4) {
        report(4, "simulation smoother oracle", criterion_4());
    }
    if wants(5) {
        report(5, "conjugate prior oracle", criterion_5());
    }
    if wants(6) {
        report(6, "tree prior oracle", criterion_6());
    }
    if wants(7) {
        report(7, "marginal likelihood oracle", criterion_7());
    }
    if wants(8) {
        report(8, "linear GIRF oracle", criterion_8());
    }
    if wants(9) {
        report(9, "proxy identification oracle", criterion_9());
    }
    if wants(10) {
        report(10, "kernel log score", criterion_10());
    }
    if wants(11) {
        report(11, "mini-FRED CLI pipeline", criterion_11());
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn criterion_1(r: &ExperimentResult) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in DgpKind::ALL {
        let fab = r.ratio(kind, "fabart", FactorScheme::Filtered).unwrap();
        let fav = r.ratio(kind, "favar", FactorScheme::Filtered).unwrap();
        let in_band = (RATIO_BAND.0..=RATIO_BAND.1).contains(&fab);
        let dominates = kind == DgpKind::Linear || fab <= fav + FABART_FAVAR_SLACK;
        pass &= in_band && dominates;
        let smoothed = r.ratio(kind, "fabart", FactorScheme::Smoothed).unwrap();
        let rw = r.rows.iter().find(|x| x.dgp == kind && x.estimator == "rw").unwrap();
        parts.push(format!(
            "{}: fabart {fab:.3} favar {fav:.3} (smoothed fabart {smoothed:.3}, rw rmse {:.3})",
            kind.name(),
            rw.rw_rmse_levels
        ));
    }
    outcome(pass, format!("band {:?}; {}", RATIO_BAND, parts.join("; ")))
}

fn criterion_2() -> Outcome {
    let cfg = MonteCarloConfig {
        n_reps: MC_REPS,
        chain: FavarConfig {
            n_draws: MC_DRAWS,
            n_burn: MC_BURN,
            ..experiment_chain()
        },
        ..Default::default()
    };
    let t = Instant::now();
    let r = monte_carlo(&cfg, &mut ChaCha8Rng::seed_from_u64(7)).expect("monte carlo");
    let mut pass = true;
    let mut parts = Vec::new();
    for s in &r.summaries {
        let bound = if s.kind == DgpKind::Linear { MC_MIN_CORR_LINEAR } else { MC_MIN_CORR_NONLINEAR };
        let ok = s.mean_correlation() >= bound && s.error_grand_mean().abs() <= MC_MAX_ERROR_MEAN;
        pass &= ok;
        parts.push(format!(
            "{}: corr {:.4} (>= {bound}) error mean {:+.1e}",
            s.kind.name(),
            s.mean_correlation(),
            s.error_grand_mean()
        ));
    }
    outcome(pass, format!("{MC_REPS} reps in {:.0?}; {}", t.elapsed(), parts.join("; ")))
}

fn criterion_3(r: &ExperimentResult) -> Outcome {
    let fab = r.rmse(DgpKind::Linear, "fabart", FactorScheme::Filtered).unwrap();
    let fav = r.rmse(DgpKind::Linear, "favar", FactorScheme::Filtered).unwrap();
    let excess = fab / fav - 1.0;
    outcome(
        excess <= MAX_RELATIVE_EXCESS,
        format!("linear DGP rmse fabart {fab:.4} vs favar {fav:.4}, excess {:+.2}%", 100.0 * excess),
    )
}

/// Scalar-state Kalman filter with the full N x N innovation covariance and
/// a Rauch-Tung-Striebel backward pass.
fn rts_smoother(phi: f64, q: f64, gamma: &DVector<f64>, r: &[f64], x: &DMatrix<f64>) -> Vec<f64> {
    let rm = DMatrix::from_diagonal(&DVector::from_column_slice(r));
    let (mut m, mut p) = (0.0, 1.0);
    let mut filt = Vec::new();
    let mut pred = Vec::new();
    for t in 0..x.nrows() {
        if t > 0 {
            m *= phi;
            p = phi * phi * p + q;
        }
        pred.push((m, p));
        let s = gamma * gamma.transpose() * p + &rm;
        let k = (s.try_inverse().unwrap() * gamma * p).transpose();
        let v = x.row(t).transpose() - gamma * m;
        m += (&k * v)[0];
        p -= (&k * gamma)[0] * p;
        filt.push((m, p));
    }
    let t_len = filt.len();
    let mut sm = vec![0.0; t_len];
    sm[t_len - 1] = filt[t_len - 1].0;
    for t in (0..t_len - 1).rev() {
        let (mf, pf) = filt[t];
        let (mp, pp) = pred[t + 1];
        let j = pf * phi / pp;
        sm[t] = mf + j * (sm[t + 1] - mp);
    }
    sm
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (t_len, phi, q) = (50, 0.8, 1.0);
    let gamma = DVector::from_vec(vec![1.0, 0.5, -0.7]);
    let r: Vec<f64> = vec![0.5, 1.0, 0.8];
    let mut f = vec![0.0; t_len];
    f[0] = rng.sample::<f64, _>(rand_distr::StandardNormal);
    for t in 1..t_len {
        f[t] = phi * f[t - 1] + rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    let x = DMatrix::from_fn(t_len, 3, |t, j| {
        gamma[j] * f[t] + r[j].sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let state = StateSpace {
        loadings: DMatrix::from_column_slice(3, 1, gamma.as_slice()),
        meas_var: r.clone(),
        var: VarCoefficients::new(1, 1, DMatrix::from_row_slice(2, 1, &[phi, 0.0])).unwrap(),
        innov_cov: DMatrix::from_element(1, 1, q),
        observed_factor: false,
    };
    let init = StateInit::standard(1);
    let mut sum = vec![0.0; t_len];
    let mut sum_sq = vec![0.0; t_len];
    for _ in 0..CK_DRAWS {
        let d = carter_kohn(&state, &x, None, &init, &mut rng).unwrap();
        for t in 0..t_len {
            sum[t] += d[(t, 0)];
            sum_sq[t] += d[(t, 0)].powi(2);
        }
    }
    let oracle = rts_smoother(phi, q, &gamma, &r, &x);
    let n = CK_DRAWS as f64;
    let z: Vec<f64> = (0..t_len)
        .map(|t| {
            let mean = sum[t] / n;
            let se = ((sum_sq[t] / n - mean * mean) / (n - 1.0)).sqrt();
            (mean - oracle[t]) / se
        })
        .collect();
    let worst = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let outside = z.iter().filter(|v| v.abs() > CK_SE_MULTIPLE).count();
    // under an exact sampler about 4.6% of periods fall outside 2 s.e.
    let expected_outside = 0.0455 * t_len as f64;
    outcome(
        outside == 0,
        format!(
            "{outside}/{t_len} periods beyond {CK_SE_MULTIPLE} s.e. (about {expected_outside:.1} expected by chance), max |z| {worst:.2} ({CK_DRAWS} draws)"
        ),
    )
}

fn max_rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / x.abs().max(1.0)).fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, l, t_len) = (3, 2, 80);
    let mut y = DMatrix::zeros(t_len, m);
    for t in 1..t_len {
        for i in 0..m {
            y[(t, i)] = 0.5 * y[(t - 1, i)] + 0.1 * y[(t - 1, (i + 1) % m)] + rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
    let means: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scales: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let dummies = build_dummy_observations(&means, &scales, 0.2, 1.0, l, 0.5).unwrap();
    let post = var_posterior(&y, l, &dummies).unwrap();

    // textbook conjugate update from the prior implied by the dummies
    let (xd, yd) = (&dummies.x, &dummies.y);
    let k = xd.ncols();
    let prior_prec = xd.transpose() * xd;
    let prior_cov = prior_prec.clone().try_inverse().unwrap();
    let b0 = &prior_cov * xd.transpose() * yd;
    let s0 = (yd - xd * &b0).transpose() * (yd - xd * &b0);
    let nu0 = (xd.nrows() - k) as f64;
    let (x, yy) = lagged_design(&y, l).unwrap();
    let xtx = x.transpose() * &x;
    let xtx_inv = xtx.clone().try_inverse().unwrap();
    let b_ols = &xtx_inv * x.transpose() * &yy;
    let resid = &yy - &x * &b_ols;
    let post_prec = &prior_prec + &xtx;
    let omega = post_prec.clone().try_inverse().unwrap();
    let b_bar = &omega * (&prior_prec * &b0 + &xtx * &b_ols);
    let shrink = (&prior_cov + &xtx_inv).try_inverse().unwrap();
    let s_bar = s0 + resid.transpose() * &resid + (&b_ols - &b0).transpose() * shrink * (&b_ols - &b0);
    let nu = nu0 + yy.nrows() as f64;
    let cov = (&s_bar / (nu - m as f64 - 1.0)).kronecker(&omega);

    let errs = [
        max_rel_diff(&b_bar, &post.mean),
        max_rel_diff(&omega, &post.xtx_inv),
        max_rel_diff(&s_bar, &post.scale),
        max_rel_diff(&cov, &post.coef_covariance()),
        (nu - post.df).abs(),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst <= NIW_TOL,
        format!("max relative deviation {worst:.2e} (mean, precision, scale, covariance, df)"),
    )
}

/// `P(max depth = k)` under the split law `alpha (1 + d)^-beta`.
fn depth_law(prior: &BartPrior, k_max: usize) -> Vec<f64> {
    // q(d, k): subtree rooted at depth d stays within depth k
    fn q(d: usize, k: usize, prior: &BartPrior) -> f64 {
        let p = prior.split_probability(d);
        if d >= k {
            1.0 - p
        } else {
            (1.0 - p) + p * q(d + 1, k, prior).powi(2)
        }
    }
    let mut out = Vec::new();
    let mut prev = 0.0;
    for k in 0..k_max {
        let c = q(0, k, prior);
        out.push(c - prev);
        prev = c;
    }
    out.push(1.0 - prev);
    out
}

fn criterion_6() -> Outcome {
    let prior = BartPrior::default();
    let space = SplitSpace::from_ranges(vec![(0.0, 1.0); 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let k_max = 4;
    let expected = depth_law(&prior, k_max);
    let mut counts = vec![0usize; k_max + 1];
    let mut trees = vec![RegressionTree::leaf(0.0); TREE_CHAINS];
    let mut kinds = [0usize; 4];
    let mut proposals = 0;
    for sweep in 0..TREE_SWEEPS {
        for tree in trees.iter_mut() {
            if proposals < N_PROPOSALS {
                let mut probe = rng.clone();
                kinds[propose_move(tree, &space, &mut probe).kind().index()] += 1;
                proposals += 1;
            }
            prior_only_step(tree, &space, &prior, &mut rng);
            if sweep >= 1000 && sweep % TREE_THIN == 0 {
                counts[tree.max_depth().min(k_max)] += 1;
            }
        }
    }
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| {
            let e = e * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new(k_max as f64).unwrap().cdf(stat);
    let freqs: Vec<f64> = kinds.iter().map(|&c| c as f64 / N_PROPOSALS as f64).collect();
    let move_ok = MoveKind::ALL
        .iter()
        .all(|k| (freqs[k.index()] - k.probability()).abs() <= MOVE_FREQ_TOL);
    let obs: Vec<String> = counts.iter().map(|c| format!("{:.4}", *c as f64 / n as f64)).collect();
    let exp: Vec<String> = expected.iter().map(|e| format!("{e:.4}")).collect();
    outcome(
        p > MIN_GOF_P && move_ok,
        format!(
            "depth 0..{k_max}+ observed [{}] expected [{}], chi2 p = {p:.3} (n = {n}); move freqs {:.3?}",
            obs.join(", "),
            exp.join(", "),
            freqs
        ),
    )
}

/// `log ∫ Π N(r_i; mu, s²) N(mu; 0, tau²) dmu` by the trapezoid rule.
fn leaf_quadrature(r: &[f64], sigma: f64, tau: f64) -> f64 {
    let lo = -12.0 * tau + r.iter().cloned().fold(0.0, f64::min).min(0.0);
    let hi = 12.0 * tau + r.iter().cloned().fold(0.0, f64::max).max(0.0);
    let n = 200_001;
    let h = (hi - lo) / (n - 1) as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let logf: Vec<f64> = (0..n)
        .map(|i| {
            let mu = lo + i as f64 * h;
            let ll: f64 = r
                .iter()
                .map(|x| -0.5 * ln2pi - sigma.ln() - 0.5 * ((x - mu) / sigma).powi(2))
                .sum();
            ll - 0.5 * ln2pi - tau.ln() - 0.5 * (mu / tau).powi(2)
        })
        .collect();
    let mx = logf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logf
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            w * (v - mx).exp()
        })
        .sum();
    mx + (s * h).ln()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..5 {
        let n_obs = rng.random_range(8..40);
        let x = DMatrix::from_fn(n_obs, 2, |_, _| rng.random::<f64>());
        let threshold = rng.random_range(0.3..0.7);
        let var = rng.random_range(0..2);
        let mut tree = RegressionTree::leaf(0.0);
        tree.grow(0, SplitRule { variable: var, threshold }).unwrap();
        let prior = BartPrior {
            n_trees: [1, 5, 20, 50, 250][case],
            ..BartPrior::default()
        };
        let sigma = rng.random_range(0.05..0.5);
        let shift = rng.random_range(-0.3..0.3);
        let resid: Vec<f64> = (0..n_obs)
            .map(|i| {
                let left = x[(i, var)] <= threshold;
                (if left { shift } else { -shift }) + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)
            })
            .collect();
        let (left, right): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
            resid.iter().copied().enumerate().partition(|(i, _)| x[(*i, var)] <= threshold);
        if left.is_empty() || right.is_empty() {
            continue;
        }
        let l: Vec<f64> = left.into_iter().map(|(_, v)| v).collect();
        let r: Vec<f64> = right.into_iter().map(|(_, v)| v).collect();
        let tau = prior.leaf_sd();
        let quad = leaf_quadrature(&l, sigma, tau) + leaf_quadrature(&r, sigma, tau);
        let exact = log_marginal_likelihood(&resid, &tree, &x, sigma, &prior).unwrap();
        worst = worst.max((quad - exact).abs());
    }
    outcome(worst <= QUAD_TOL, format!("max |analytic - quadrature| = {worst:.2e} over 5 cases"))
}

fn criterion_8() -> Outcome {
    let (m, l, n) = (3, 2, 5);
    let mut b = DMatrix::zeros(m * l + 1, m);
    let a1 = [0.5, 0.1, 0.0, -0.2, 0.4, 0.1, 0.0, 0.2, 0.3];
    let a2 = [0.1, 0.0, 0.05, 0.0, 0.1, 0.0, 0.05, 0.0, 0.1];
    for i in 0..m {
        for j in 0..m {
            // equation j, lag regressor i
            b[(i, j)] = a1[j * m + i];
            b[(m + i, j)] = a2[j * m + i];
        }
    }
    for j in 0..m {
        b[(m * l, j)] = 0.1 * (j as f64 + 1.0);
    }
    let var = VarCoefficients::new(m, l, b).unwrap();
    let innov = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 0.8, 0.2, 0.1, 0.2, 0.6]);
    let loadings = DMatrix::from_fn(n, m, |i, j| ((i + 2 * j) as f64 * 0.37).sin());
    let map = LinearMap { loadings: &loadings };
    let sys = DrawSystem { var: &var, innov_cov: &innov, map: &map };
    let start = long_run_mean(&var).unwrap();
    let impact = DVector::from_vec(vec![1.0, 0.4, -0.3]);
    let horizons = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (ry, rx, se) = simulate_girf(&sys, &start, &impact, horizons, GIRF_N_SIM, &mut rng).unwrap();
    let (ny, nx, se_n) = simulate_girf(&sys, &start, &(-&impact), horizons, GIRF_N_SIM, &mut rng).unwrap();
    let closed = impulse_response(&var, &impact, horizons);
    let closed_x = &closed * loadings.transpose();
    let mut worst: f64 = 0.0;
    let mut worst_asym: f64 = 0.0;
    for h in 0..=horizons {
        for c in 0..m + n {
            let (sim, exact, neg) = if c < m {
                (ry[(h, c)], closed[(h, c)], ny[(h, c)])
            } else {
                (rx[(h, c - m)], closed_x[(h, c - m)], nx[(h, c - m)])
            };
            let tol = (GIRF_SE_MULTIPLE * se[(h, c)]).max(1e-10);
            worst = worst.max((sim - exact).abs() / tol);
            let tol_a = (GIRF_SE_MULTIPLE * (se[(h, c)].powi(2) + se_n[(h, c)].powi(2)).sqrt()).max(1e-10);
            worst_asym = worst_asym.max((sim + neg).abs() / tol_a);
        }
    }
    outcome(
        worst <= 1.0 && worst_asym <= 1.0,
        format!("max deviation / tolerance: response {worst:.2e}, asymmetry {worst_asym:.2e}"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.8, 0.3, 0.0, -0.6, 0.2, 0.3]);
    let e = linalg::standard_normal_matrix(PROXY_T, 3, &mut rng);
    let u = &e * a.transpose();
    // unit signal plus unit noise: reliability 0.5
    let m: Vec<Option<f64>> = (0..PROXY_T)
        .map(|t| Some(e[(t, 0)] + rng.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();
    let d = instrument_impact(&u, &m, &ProxyOptions::default()).unwrap();
    let rel: Vec<f64> = (0..3)
        .map(|i| ((d.impact_column[i] - a[(i, 0)]) / a[(i, 0)]).abs())
        .collect();
    let worst = rel.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst <= PROXY_REL_TOL,
        format!(
            "estimated {:.4?} vs true [1, 0.8, -0.6], max relative error {:.2}%, first-stage F {:.0}, rho^2 {:.3}",
            d.impact_column.as_slice(),
            100.0 * worst,
            d.first_stage_f,
            d.rho_sq
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let d: Vec<f64> = linalg::standard_normal_vector(KDE_DRAWS, &mut rng).iter().copied().collect();
    let s = log_score(&d, 0.0, &KdeOptions::default()).unwrap();
    let target = -0.5 * (2.0 * std::f64::consts::PI).ln();
    outcome(
        (s.value - target).abs() <= KDE_TOL && !s.floored,
        format!("log density {:.4} vs {target:.4}", s.value),
    )
}

fn run_cli(args: &[&str], config: &Path, out: &Path) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_fabart"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(String::from_utf8_lossy(&o.stdout).into_owned())
    } else {
        Err(format!("{args:?} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)))
    }
}

fn criterion_11() -> Outcome {
    match mini_fred_pipeline() {
        Ok(detail) => outcome(true, detail),
        Err(e) => outcome(false, e),
    }
}

fn mini_fred_pipeline() -> Result<String, String> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini_fred");
    let config = fixture.join("config.toml");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("out");
    let t = Instant::now();
    for cmd in ["estimate", "forecast", "girf", "simulate", "montecarlo"] {
        run_cli(&[cmd], &config, &out)?;
    }
    for f in [
        "draws/meta.json",
        "forecasts/ensemble.csv",
        "girf/girf_positive.csv",
        "girf/sign_asymmetry.csv",
        "tables/forecast_rmse.csv",
        "tables/mc_correlations.csv",
    ] {
        if !out.join(f).exists() {
            return Err(format!("missing output {f}"));
        }
    }

    // realized values for the held-out months, from the untruncated panel
    let cfg = RunConfig::load(&config).map_err(|e| e.to_string())?;
    let origin_panel = load_panel(cfg.data.panel.as_ref().unwrap(), &cfg.data).map_err(|e| e.to_string())?.panel;
    let mut full_cfg = cfg.data.clone();
    full_cfg.end = None;
    let full = load_panel(cfg.data.panel.as_ref().unwrap(), &full_cfg).map_err(|e| e.to_string())?.panel;
    let origin = origin_panel.dates.last().unwrap().clone();
    let o = full.dates.iter().position(|d| *d == origin).unwrap();
    let mut realized = Vec::new();
    for h in 1..=cfg.forecast.horizon {
        for name in &cfg.data.targets {
            let j = full.names.iter().position(|n| n == name).unwrap();
            realized.push(RealizedRecord {
                variable: name.clone(),
                origin: origin.clone(),
                horizon: h,
                value: full.x()[(o + h, j)],
            });
        }
        realized.push(RealizedRecord {
            variable: full.z_name.clone().unwrap(),
            origin: origin.clone(),
            horizon: h,
            value: full.z().unwrap()[o + h],
        });
    }
    let realized_path = tmp.path().join("realized.csv");
    let mut w = csv::Writer::from_path(&realized_path).map_err(|e| e.to_string())?;
    for r in &realized {
        w.serialize(r).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())?;
    let ensembles_path = out.join("forecasts/ensemble.csv");
    let eval_cfg = tmp.path().join("evaluate.toml");
    std::fs::write(
        &eval_cfg,
        format!(
            "[evaluate]\nensembles = {:?}\nrealized = {:?}\n",
            ensembles_path.to_str().unwrap(),
            realized_path.to_str().unwrap()
        ),
    )
    .map_err(|e| e.to_string())?;
    run_cli(&["evaluate"], &eval_cfg, &out)?;
    let elapsed = t.elapsed();

    // CLI table against direct library calls
    let ens: Vec<EnsembleRecord> = csv::Reader::from_path(&ensembles_path)
        .map_err(|e| e.to_string())?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let (rows, _) = evaluate(&ens, &realized, &EvalOptions::default()).map_err(|e| e.to_string())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| e.to_string())?;
    }
    let library = w.into_inner().map_err(|e| e.to_string())?;
    let cli = std::fs::read(out.join("tables/evaluation.csv")).map_err(|e| e.to_string())?;
    if library != cli {
        return Err("evaluate table differs from the library result".into());
    }
    if elapsed > CLI_BUDGET {
        return Err(format!("pipeline took {elapsed:.0?}, budget {CLI_BUDGET:?}"));
    }
    Ok(format!(
        "6 subcommands in {elapsed:.1?}; evaluate table matches library bit-for-bit ({} rows)",
        rows.len()
    ))
}
