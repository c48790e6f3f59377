use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::moves::{propose_move, MoveKind, Proposed, SplitSpace};
use super::prior::{BartPrior, SigmaPrior};
use super::tree::RegressionTree;
use crate::error::{Error, Result};

/// Sum-of-trees fit for one measurement equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    /// Residual standard deviation, in the rescaled target units.
    pub sigma: f64,
    pub equation_index: usize,
    pub sigma_prior: SigmaPrior,
}

impl Forest {
    /// `n_trees` stumps whose leaves sum to `init_mean`.
    pub fn new(
        n_trees: usize,
        init_mean: f64,
        sigma: f64,
        equation_index: usize,
        sigma_prior: SigmaPrior,
    ) -> Self {
        let v = init_mean / n_trees as f64;
        Forest {
            trees: vec![RegressionTree::leaf(v); n_trees],
            sigma,
            equation_index,
            sigma_prior,
        }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        predict_forest(self, x)
    }
}

pub fn predict_tree(tree: &RegressionTree, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    tree.predict(x)
}

pub fn predict_forest(forest: &Forest, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if forest.trees.is_empty() {
        return Err(Error::Structure("empty forest".into()));
    }
    let mut out = vec![0.0; x.nrows()];
    for tree in &forest.trees {
        tree.check_columns(x.ncols())?;
        for (r, o) in out.iter_mut().enumerate() {
            *o += tree.leaf_value(tree.route(x, r)).expect("leaf");
        }
    }
    Ok(out)
}

/// Target minus the fit of every tree except `exclude`.
pub fn partial_residual(
    target: &[f64],
    forest: &Forest,
    exclude: usize,
    x: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    if exclude >= forest.n_trees() {
        return Err(Error::Structure(format!(
            "tree index {exclude} out of range for {} trees",
            forest.n_trees()
        )));
    }
    if target.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "target length {} vs {} rows",
            target.len(),
            x.nrows()
        )));
    }
    let mut out = target.to_vec();
    for (s, tree) in forest.trees.iter().enumerate() {
        if s == exclude {
            continue;
        }
        tree.check_columns(x.ncols())?;
        for (r, o) in out.iter_mut().enumerate() {
            *o -= tree.leaf_value(tree.route(x, r)).expect("leaf");
        }
    }
    Ok(out)
}

/// Count and sum of residuals per leaf, indexed by node id.
#[derive(Clone, Debug)]
pub struct LeafStats {
    pub count: Vec<usize>,
    pub sum: Vec<f64>,
}

impl LeafStats {
    pub fn collect(tree: &RegressionTree, assignment: &[usize], residuals: &[f64]) -> Self {
        let mut count = vec![0usize; tree.capacity()];
        let mut sum = vec![0.0; tree.capacity()];
        for (&leaf, &r) in assignment.iter().zip(residuals) {
            count[leaf] += 1;
            sum[leaf] += r;
        }
        LeafStats { count, sum }
    }
}

/// Log of `N(r; 0, sigma^2 I + leaf_var 11')` for the residuals in one leaf,
/// given their count, sum and sum of squares.
pub fn leaf_log_marginal(n: usize, sum: f64, sum_sq: f64, sigma: f64, leaf_sd: f64) -> f64 {
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let nf = n as f64;
    let s2 = sigma * sigma;
    let t2 = leaf_sd * leaf_sd;
    let denom = s2 + nf * t2;
    -0.5 * nf * (2.0 * PI).ln() - (nf - 1.0) * sigma.ln() - 0.5 * denom.ln()
        - (sum_sq - t2 * sum * sum / denom) / (2.0 * s2)
}

fn log_marginal_from_assignment(
    tree: &RegressionTree,
    assignment: &[usize],
    residuals: &[f64],
    sigma: f64,
    leaf_sd: f64,
) -> f64 {
    let stats = LeafStats::collect(tree, assignment, residuals);
    let mut sum_sq = vec![0.0; tree.capacity()];
    for (&leaf, &r) in assignment.iter().zip(residuals) {
        sum_sq[leaf] += r * r;
    }
    tree.leaves()
        .into_iter()
        .map(|l| leaf_log_marginal(stats.count[l], stats.sum[l], sum_sq[l], sigma, leaf_sd))
        .sum()
}

/// Integrated likelihood of a tree with the terminal-node values marginalised
/// under their N(0, leaf_sd^2) prior. A leaf without observations gives -inf.
pub fn log_marginal_likelihood(
    residuals: &[f64],
    tree: &RegressionTree,
    x: &DMatrix<f64>,
    sigma: f64,
    prior: &BartPrior,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::numerical("marginal likelihood", format!("sigma = {sigma}")));
    }
    if residuals.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "{} residuals vs {} rows",
            residuals.len(),
            x.nrows()
        )));
    }
    let assignment = tree.assign(x)?;
    Ok(log_marginal_from_assignment(tree, &assignment, residuals, sigma, prior.leaf_sd()))
}

/// Log prior of a tree structure: split/stop probabilities by depth times the
/// uniform rule densities of every internal node.
pub fn log_tree_prior(tree: &RegressionTree, space: &SplitSpace, prior: &BartPrior) -> f64 {
    let mut lp = 0.0;
    for id in tree.node_ids() {
        let d = tree.node(id).depth;
        let p = prior.split_probability(d);
        match tree.rule(id) {
            Some(rule) => lp += p.ln() + space.log_rule_density(&rule),
            None => lp += (1.0 - p).ln(),
        }
    }
    lp
}

/// Metropolis-Hastings decision for a log acceptance ratio.
pub fn accept_log_ratio<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> bool {
    if log_a.is_nan() {
        return false;
    }
    if log_a >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_a
}

/// Accept or reject a candidate tree with probability
/// `min(1, q_rev L(cand) p(cand) / (q_fwd L(cur) p(cur)))`.
#[allow(clippy::too_many_arguments)]
pub fn mh_accept<R: Rng + ?Sized>(
    current: &RegressionTree,
    candidate: &RegressionTree,
    log_q_ratio: f64,
    residuals: &[f64],
    x: &DMatrix<f64>,
    space: &SplitSpace,
    sigma: f64,
    prior: &BartPrior,
    rng: &mut R,
) -> Result<bool> {
    let ll_cur = log_marginal_likelihood(residuals, current, x, sigma, prior)?;
    let ll_cand = log_marginal_likelihood(residuals, candidate, x, sigma, prior)?;
    if ll_cand == f64::NEG_INFINITY {
        return Ok(false);
    }
    let log_a = log_q_ratio + ll_cand - ll_cur + log_tree_prior(candidate, space, prior)
        - log_tree_prior(current, space, prior);
    Ok(accept_log_ratio(log_a, rng))
}

/// One structural update of a tree targeting the tree prior alone (no
/// likelihood, no empty-leaf rule).
pub fn prior_only_step<R: Rng + ?Sized>(
    tree: &mut RegressionTree,
    space: &SplitSpace,
    prior: &BartPrior,
    rng: &mut R,
) -> Option<MoveKind> {
    match propose_move(tree, space, rng) {
        Proposed::Infeasible(_) => None,
        Proposed::Candidate(p) => {
            let log_a = p.log_q_ratio + log_tree_prior(&p.candidate, space, prior)
                - log_tree_prior(tree, space, prior);
            if accept_log_ratio(log_a, rng) {
                *tree = p.candidate;
                Some(p.kind)
            } else {
                None
            }
        }
    }
}

/// Conjugate normal posterior for a leaf: returns (mean, variance).
pub fn leaf_posterior(n: usize, sum: f64, sigma: f64, leaf_sd: f64) -> (f64, f64) {
    let prec = 1.0 / (leaf_sd * leaf_sd) + n as f64 / (sigma * sigma);
    let var = 1.0 / prec;
    (var * sum / (sigma * sigma), var)
}

fn draw_leaves<R: Rng + ?Sized>(
    tree: &mut RegressionTree,
    assignment: &[usize],
    residuals: &[f64],
    sigma: f64,
    leaf_sd: f64,
    rng: &mut R,
) {
    let stats = LeafStats::collect(tree, assignment, residuals);
    for leaf in tree.leaves() {
        let (m, v) = leaf_posterior(stats.count[leaf], stats.sum[leaf], sigma, leaf_sd);
        let z: f64 = StandardNormal.sample(rng);
        tree.set_leaf_value(leaf, m + v.sqrt() * z);
    }
}

/// Redraw every terminal value from its Normal-Normal posterior.
pub fn sample_leaf_values<R: Rng + ?Sized>(
    tree: &mut RegressionTree,
    residuals: &[f64],
    x: &DMatrix<f64>,
    sigma: f64,
    prior: &BartPrior,
    rng: &mut R,
) -> Result<()> {
    let assignment = tree.assign(x)?;
    draw_leaves(tree, &assignment, residuals, sigma, prior.leaf_sd(), rng);
    Ok(())
}

/// Draw sigma from its scaled inverse chi-square posterior.
pub fn sample_sigma<R: Rng + ?Sized>(residuals: &[f64], prior: &SigmaPrior, rng: &mut R) -> f64 {
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let df = prior.nu + residuals.len() as f64;
    let chi = ChiSquared::new(df).expect("positive df");
    ((prior.nu * prior.xi + ssr) / chi.sample(rng)).sqrt()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub proposed: [usize; 4],
    pub accepted: [usize; 4],
    pub infeasible: usize,
}

impl SweepStats {
    pub fn merge(&mut self, other: &SweepStats) {
        for k in 0..4 {
            self.proposed[k] += other.proposed[k];
            self.accepted[k] += other.accepted[k];
        }
        self.infeasible += other.infeasible;
    }

    pub fn acceptance_rate(&self) -> f64 {
        let p: usize = self.proposed.iter().sum();
        if p == 0 {
            0.0
        } else {
            self.accepted.iter().sum::<usize>() as f64 / p as f64
        }
    }
}

/// One pass of Bayesian backfitting over all trees, followed by a sigma draw.
/// Returns the total fit of the updated forest.
pub fn backfit_sweep<R: Rng + ?Sized>(
    forest: &mut Forest,
    target: &[f64],
    x: &DMatrix<f64>,
    prior: &BartPrior,
    rng: &mut R,
) -> Result<(Vec<f64>, SweepStats)> {
    let n = x.nrows();
    if target.len() != n {
        return Err(Error::Dimension(format!("target length {} vs {n} rows", target.len())));
    }
    let space = SplitSpace::from_rows(x);
    let leaf_sd = prior.leaf_sd();
    let mut fits: Vec<Vec<f64>> = Vec::with_capacity(forest.n_trees());
    let mut total = vec![0.0; n];
    for tree in &forest.trees {
        let f = tree.predict(x)?;
        for (t, v) in total.iter_mut().zip(&f) {
            *t += v;
        }
        fits.push(f);
    }

    let mut stats = SweepStats::default();
    let mut residual = vec![0.0; n];
    for s in 0..forest.n_trees() {
        for i in 0..n {
            residual[i] = target[i] - total[i] + fits[s][i];
        }
        let sigma = forest.sigma;
        let current = &forest.trees[s];
        let mut assignment: Vec<usize> = (0..n).map(|r| current.route(x, r)).collect();
        match propose_move(current, &space, rng) {
            Proposed::Infeasible(_) => stats.infeasible += 1,
            Proposed::Candidate(p) => {
                stats.proposed[p.kind.index()] += 1;
                let cand_assign: Vec<usize> = (0..n).map(|r| p.candidate.route(x, r)).collect();
                let ll_cand =
                    log_marginal_from_assignment(&p.candidate, &cand_assign, &residual, sigma, leaf_sd);
                if ll_cand > f64::NEG_INFINITY {
                    let ll_cur =
                        log_marginal_from_assignment(current, &assignment, &residual, sigma, leaf_sd);
                    let log_a = p.log_q_ratio + ll_cand - ll_cur
                        + log_tree_prior(&p.candidate, &space, prior)
                        - log_tree_prior(current, &space, prior);
                    if accept_log_ratio(log_a, rng) {
                        stats.accepted[p.kind.index()] += 1;
                        forest.trees[s] = p.candidate;
                        assignment = cand_assign;
                    }
                }
            }
        }
        let tree = &mut forest.trees[s];
        draw_leaves(tree, &assignment, &residual, sigma, leaf_sd, rng);
        let fit = &mut fits[s];
        for i in 0..n {
            let v = tree.leaf_value(assignment[i]).expect("leaf");
            total[i] += v - fit[i];
            fit[i] = v;
        }
    }
    let full: Vec<f64> = target.iter().zip(&total).map(|(y, f)| y - f).collect();
    forest.sigma = sample_sigma(&full, &forest.sigma_prior, rng);
    Ok((total, stats))
}
