//! Bayesian additive regression trees for the measurement equations.
//!
//! Each observable is modelled as a sum of `S` shallow regression trees on
//! the augmented factor vector. Trees are updated one at a time against the
//! partial residual of all other trees (Bayesian backfitting): a
//! grow/prune/change/swap proposal is accepted with a Metropolis-Hastings
//! step on the integrated likelihood, the terminal values are redrawn from
//! their conjugate normal posterior, and the residual variance is updated
//! last.

mod moves;
mod prior;
mod sampler;
mod tree;

pub use moves::{
    propose_kind, propose_move, MoveKind, Proposal, Proposed, SplitSpace, P_CHANGE, P_GROW,
    P_PRUNE, P_SWAP,
};
pub use prior::{node_split_probability, BartPrior, LeafScale, SigmaPrior};
pub use sampler::{
    accept_log_ratio, backfit_sweep, leaf_log_marginal, leaf_posterior, log_marginal_likelihood,
    log_tree_prior, mh_accept, partial_residual, predict_forest, predict_tree, prior_only_step,
    sample_leaf_values, sample_sigma, Forest, LeafStats, SweepStats,
};
pub use tree::{CanonicalTree, Node, NodeKind, RegressionTree, SplitRule};

use serde::{Deserialize, Serialize};

/// Affine map of a target series onto `[-0.5, 0.5]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub min: f64,
    pub max: f64,
}

impl TargetScale {
    pub fn fit(y: &[f64]) -> Self {
        let (min, max) = y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if max > min {
            TargetScale { min, max }
        } else {
            TargetScale { min: min - 0.5, max: min + 0.5 }
        }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn to_unit(&self, y: f64) -> f64 {
        (y - self.min) / self.width() - 0.5
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        (u + 0.5) * self.width() + self.min
    }
}

#[derive(Serialize)]
struct TreeSummary<'a> {
    tree: usize,
    leaves: usize,
    depth: usize,
    structure: &'a RegressionTree,
}

/// Human-readable JSON dump of a forest (per-tree size, depth, nodes).
pub fn dump_forest(forest: &Forest) -> String {
    let trees: Vec<TreeSummary<'_>> = forest
        .trees
        .iter()
        .enumerate()
        .map(|(i, t)| TreeSummary {
            tree: i,
            leaves: t.n_leaves(),
            depth: t.max_depth(),
            structure: t,
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({
        "equation": forest.equation_index,
        "sigma": forest.sigma,
        "trees": trees,
    }))
    .expect("forest serialises")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_scale_maps_to_unit_interval() {
        let y = [3.0, -1.0, 7.0, 2.0];
        let s = TargetScale::fit(&y);
        let u: Vec<f64> = y.iter().map(|&v| s.to_unit(v)).collect();
        assert_eq!(u.iter().cloned().fold(f64::INFINITY, f64::min), -0.5);
        assert_eq!(u.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 0.5);
        for (&a, &b) in y.iter().zip(&u) {
            assert!((s.from_unit(b) - a).abs() < 1e-12);
        }
    }

    #[test]
    fn dump_is_json() {
        let f = Forest::new(2, 0.0, 1.0, 3, SigmaPrior { nu: 3.0, xi: 1.0 });
        let v: serde_json::Value = serde_json::from_str(&dump_forest(&f)).unwrap();
        assert_eq!(v["equation"], 3);
        assert_eq!(v["trees"].as_array().unwrap().len(), 2);
    }
}
