use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, SplitRule};

pub const P_GROW: f64 = 0.25;
pub const P_PRUNE: f64 = 0.25;
pub const P_CHANGE: f64 = 0.40;
pub const P_SWAP: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [MoveKind::Grow, MoveKind::Prune, MoveKind::Change, MoveKind::Swap];

    pub fn probability(self) -> f64 {
        match self {
            MoveKind::Grow => P_GROW,
            MoveKind::Prune => P_PRUNE,
            MoveKind::Change => P_CHANGE,
            MoveKind::Swap => P_SWAP,
        }
    }

    pub fn index(self) -> usize {
        match self {
            MoveKind::Grow => 0,
            MoveKind::Prune => 1,
            MoveKind::Change => 2,
            MoveKind::Swap => 3,
        }
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> MoveKind {
        let u: f64 = rng.random();
        if u < P_GROW {
            MoveKind::Grow
        } else if u < P_GROW + P_PRUNE {
            MoveKind::Prune
        } else if u < P_GROW + P_PRUNE + P_CHANGE {
            MoveKind::Change
        } else {
            MoveKind::Swap
        }
    }
}

/// Observed range of every regressor column; thresholds are drawn uniformly
/// over these intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpace {
    ranges: Vec<(f64, f64)>,
}

impl SplitSpace {
    pub fn from_rows(x: &DMatrix<f64>) -> Self {
        let ranges = x
            .column_iter()
            .map(|c| {
                c.iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
            })
            .collect();
        SplitSpace { ranges }
    }

    pub fn from_ranges(ranges: Vec<(f64, f64)>) -> Self {
        SplitSpace { ranges }
    }

    pub fn n_vars(&self) -> usize {
        self.ranges.len()
    }

    pub fn range(&self, var: usize) -> (f64, f64) {
        self.ranges[var]
    }

    /// Log density of drawing `rule` (uniform variable, uniform threshold).
    /// Degenerate columns put a point mass on their single value.
    pub fn log_rule_density(&self, rule: &SplitRule) -> f64 {
        let (lo, hi) = self.ranges[rule.variable];
        let width = hi - lo;
        let log_thr = if width > 0.0 { -width.ln() } else { 0.0 };
        -(self.n_vars() as f64).ln() + log_thr
    }

    pub fn draw_rule<R: Rng + ?Sized>(&self, rng: &mut R) -> SplitRule {
        let variable = rng.random_range(0..self.n_vars());
        let (lo, hi) = self.ranges[variable];
        let threshold = if hi > lo { lo + (hi - lo) * rng.random::<f64>() } else { lo };
        SplitRule { variable, threshold }
    }
}

#[derive(Clone, Debug)]
pub struct Proposal {
    pub kind: MoveKind,
    pub candidate: RegressionTree,
    /// `log q(candidate -> current) - log q(current -> candidate)`.
    pub log_q_ratio: f64,
    /// Node the move acted on (new parent for Grow, collapsed node for Prune,
    /// relabelled node for Change, parent of the pair for Swap).
    pub node: usize,
}

#[derive(Clone, Debug)]
pub enum Proposed {
    Candidate(Proposal),
    /// The drawn move cannot act on the current topology.
    Infeasible(MoveKind),
}

impl Proposed {
    pub fn kind(&self) -> MoveKind {
        match self {
            Proposed::Candidate(p) => p.kind,
            Proposed::Infeasible(k) => *k,
        }
    }
}

/// Draw a move type with probabilities (0.25, 0.25, 0.40, 0.10) and build the
/// candidate tree. New leaves inherit their parent's value as a placeholder;
/// leaf values are redrawn after the structural update.
pub fn propose_move<R: Rng + ?Sized>(
    tree: &RegressionTree,
    space: &SplitSpace,
    rng: &mut R,
) -> Proposed {
    let kind = MoveKind::draw(rng);
    propose_kind(tree, space, kind, rng)
}

pub fn propose_kind<R: Rng + ?Sized>(
    tree: &RegressionTree,
    space: &SplitSpace,
    kind: MoveKind,
    rng: &mut R,
) -> Proposed {
    match kind {
        MoveKind::Grow => {
            if space.n_vars() == 0 {
                return Proposed::Infeasible(kind);
            }
            let leaves = tree.leaves();
            let leaf = leaves[rng.random_range(0..leaves.len())];
            let rule = space.draw_rule(rng);
            let mut candidate = tree.clone();
            candidate.grow(leaf, rule).expect("grow on a leaf");
            let w_after = candidate.prunable_nodes().len() as f64;
            let log_fwd = P_GROW.ln() - (leaves.len() as f64).ln() + space.log_rule_density(&rule);
            let log_rev = P_PRUNE.ln() - w_after.ln();
            Proposed::Candidate(Proposal {
                kind,
                candidate,
                log_q_ratio: log_rev - log_fwd,
                node: leaf,
            })
        }
        MoveKind::Prune => {
            let prunable = tree.prunable_nodes();
            if prunable.is_empty() {
                return Proposed::Infeasible(kind);
            }
            let node = prunable[rng.random_range(0..prunable.len())];
            let rule = tree.rule(node).expect("prunable node is internal");
            let (l, r) = tree.children(node).expect("internal");
            let merged = 0.5 * (tree.leaf_value(l).unwrap() + tree.leaf_value(r).unwrap());
            let mut candidate = tree.clone();
            candidate.prune(node, merged).expect("prunable");
            let leaves_after = candidate.n_leaves() as f64;
            let log_fwd = P_PRUNE.ln() - (prunable.len() as f64).ln();
            let log_rev = P_GROW.ln() - leaves_after.ln() + space.log_rule_density(&rule);
            Proposed::Candidate(Proposal {
                kind,
                candidate,
                log_q_ratio: log_rev - log_fwd,
                node,
            })
        }
        MoveKind::Change => {
            let internals = tree.internals();
            if internals.is_empty() || space.n_vars() == 0 {
                return Proposed::Infeasible(kind);
            }
            let node = internals[rng.random_range(0..internals.len())];
            let old = tree.rule(node).expect("internal");
            let new = space.draw_rule(rng);
            let mut candidate = tree.clone();
            candidate.set_rule(node, new);
            Proposed::Candidate(Proposal {
                kind,
                candidate,
                log_q_ratio: space.log_rule_density(&old) - space.log_rule_density(&new),
                node,
            })
        }
        MoveKind::Swap => {
            let pairs = tree.internal_pairs();
            if pairs.is_empty() {
                return Proposed::Infeasible(kind);
            }
            let (parent, child) = pairs[rng.random_range(0..pairs.len())];
            let rp = tree.rule(parent).expect("internal");
            let rc = tree.rule(child).expect("internal");
            let mut candidate = tree.clone();
            candidate.set_rule(parent, rc);
            candidate.set_rule(child, rp);
            Proposed::Candidate(Proposal {
                kind,
                candidate,
                log_q_ratio: 0.0,
                node: parent,
            })
        }
    }
}
