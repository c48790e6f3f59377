use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary split `x[variable] <= threshold` (left) versus `> threshold` (right).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub variable: usize,
    pub threshold: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, x: &DMatrix<f64>, row: usize) -> bool {
        x[(row, self.variable)] <= self.threshold
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf { value: f64 },
    Internal { rule: SplitRule, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub depth: usize,
}

/// Arena-backed binary regression tree. Slot 0 is always the root; pruned
/// slots are recycled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Option<Node>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    free: Vec<usize>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Some(Node {
                kind: NodeKind::Leaf { value },
                parent: None,
                depth: 0,
            })],
            free: Vec::new(),
        }
    }

    pub const ROOT: usize = 0;

    pub fn node(&self, id: usize) -> &Node {
        self.nodes[id].as_ref().expect("live node id")
    }

    fn node_mut(&mut self, id: usize) -> &mut Node {
        self.nodes[id].as_mut().expect("live node id")
    }

    /// Size of the id space (including recycled slots).
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|_| i))
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        matches!(self.node(id).kind, NodeKind::Leaf { .. })
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.node_ids().filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn internals(&self) -> Vec<usize> {
        self.node_ids().filter(|&i| !self.is_leaf(i)).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.node_ids().filter(|&i| self.is_leaf(i)).count()
    }

    pub fn n_internal(&self) -> usize {
        self.node_ids().filter(|&i| !self.is_leaf(i)).count()
    }

    pub fn children(&self, id: usize) -> Option<(usize, usize)> {
        match self.node(id).kind {
            NodeKind::Internal { left, right, .. } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn rule(&self, id: usize) -> Option<SplitRule> {
        match self.node(id).kind {
            NodeKind::Internal { rule, .. } => Some(rule),
            NodeKind::Leaf { .. } => None,
        }
    }

    pub fn leaf_value(&self, id: usize) -> Option<f64> {
        match self.node(id).kind {
            NodeKind::Leaf { value } => Some(value),
            NodeKind::Internal { .. } => None,
        }
    }

    pub fn set_leaf_value(&mut self, id: usize, v: f64) {
        if let NodeKind::Leaf { value } = &mut self.node_mut(id).kind {
            *value = v;
        }
    }

    pub fn set_rule(&mut self, id: usize, new_rule: SplitRule) {
        if let NodeKind::Internal { rule, .. } = &mut self.node_mut(id).kind {
            *rule = new_rule;
        }
    }

    /// Internal nodes whose two children are both leaves (prunable).
    pub fn prunable_nodes(&self) -> Vec<usize> {
        self.node_ids()
            .filter(|&i| match self.children(i) {
                Some((l, r)) => self.is_leaf(l) && self.is_leaf(r),
                None => false,
            })
            .collect()
    }

    /// (parent, child) pairs in which both nodes are internal.
    pub fn internal_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in self.node_ids() {
            if let Some((l, r)) = self.children(i) {
                for c in [l, r] {
                    if !self.is_leaf(c) {
                        out.push((i, c));
                    }
                }
            }
        }
        out
    }

    pub fn max_depth(&self) -> usize {
        self.node_ids().map(|i| self.node(i).depth).max().unwrap_or(0)
    }

    fn alloc(&mut self, node: Node) -> usize {
        if let Some(id) = self.free.pop() {
            self.nodes[id] = Some(node);
            id
        } else {
            self.nodes.push(Some(node));
            self.nodes.len() - 1
        }
    }

    /// Split a leaf. Both children start with the parent's leaf value.
    pub fn grow(&mut self, leaf: usize, rule: SplitRule) -> Result<(usize, usize)> {
        let (value, depth) = match self.node(leaf).kind {
            NodeKind::Leaf { value } => (value, self.node(leaf).depth),
            NodeKind::Internal { .. } => {
                return Err(Error::Structure(format!("grow on internal node {leaf}")))
            }
        };
        let child = |parent| Node {
            kind: NodeKind::Leaf { value },
            parent: Some(parent),
            depth: depth + 1,
        };
        let left = self.alloc(child(leaf));
        let right = self.alloc(child(leaf));
        self.node_mut(leaf).kind = NodeKind::Internal { rule, left, right };
        Ok((left, right))
    }

    /// Collapse an internal node whose children are both leaves.
    pub fn prune(&mut self, id: usize, value: f64) -> Result<()> {
        let (l, r) = self
            .children(id)
            .ok_or_else(|| Error::Structure(format!("prune on leaf {id}")))?;
        if !(self.is_leaf(l) && self.is_leaf(r)) {
            return Err(Error::Structure(format!(
                "prune on node {id} whose children are not both leaves"
            )));
        }
        self.nodes[l] = None;
        self.nodes[r] = None;
        self.free.push(r);
        self.free.push(l);
        self.node_mut(id).kind = NodeKind::Leaf { value };
        Ok(())
    }

    /// Largest split variable index, if any.
    pub fn max_variable(&self) -> Option<usize> {
        self.node_ids().filter_map(|i| self.rule(i)).map(|r| r.variable).max()
    }

    pub fn check_columns(&self, n_cols: usize) -> Result<()> {
        match self.max_variable() {
            Some(v) if v >= n_cols => Err(Error::Structure(format!(
                "split variable {v} out of range for {n_cols} regressor columns"
            ))),
            _ => Ok(()),
        }
    }

    /// Leaf id reached by `row`. Assumes split variables are valid.
    #[inline]
    pub fn route(&self, x: &DMatrix<f64>, row: usize) -> usize {
        let mut id = Self::ROOT;
        loop {
            match &self.node(id).kind {
                NodeKind::Leaf { .. } => return id,
                NodeKind::Internal { rule, left, right } => {
                    id = if rule.goes_left(x, row) { *left } else { *right };
                }
            }
        }
    }

    /// Leaf id for every row.
    pub fn assign(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        self.check_columns(x.ncols())?;
        Ok((0..x.nrows()).map(|r| self.route(x, r)).collect())
    }

    /// Fitted step function: the leaf value of the region each row falls in.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_columns(x.ncols())?;
        Ok((0..x.nrows())
            .map(|r| self.leaf_value(self.route(x, r)).expect("route ends at a leaf"))
            .collect())
    }

    /// Structural checks: children link back to parents, depths are
    /// consistent, and leaves = internals + 1.
    pub fn validate(&self) -> Result<()> {
        let mut seen = 0usize;
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            seen += 1;
            if let Some((l, r)) = self.children(id) {
                for c in [l, r] {
                    let n = self.nodes.get(c).and_then(|n| n.as_ref()).ok_or_else(|| {
                        Error::Structure(format!("node {id} points to dead child {c}"))
                    })?;
                    if n.parent != Some(id) || n.depth != self.node(id).depth + 1 {
                        return Err(Error::Structure(format!("bad back-link at node {c}")));
                    }
                    stack.push(c);
                }
            }
        }
        if seen != self.node_ids().count() {
            return Err(Error::Structure("unreachable live nodes".into()));
        }
        if self.n_leaves() != self.n_internal() + 1 {
            return Err(Error::Structure("leaf count != internal count + 1".into()));
        }
        Ok(())
    }

    /// Topology with slot ids canonicalised, for structural comparisons.
    pub fn canonical(&self) -> CanonicalTree {
        fn walk(t: &RegressionTree, id: usize) -> CanonicalTree {
            match &t.node(id).kind {
                NodeKind::Leaf { .. } => CanonicalTree::Leaf,
                NodeKind::Internal { rule, left, right } => CanonicalTree::Split(
                    rule.variable,
                    rule.threshold.to_bits(),
                    Box::new(walk(t, *left)),
                    Box::new(walk(t, *right)),
                ),
            }
        }
        walk(self, Self::ROOT)
    }
}

/// Slot-independent tree shape (leaf values ignored).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum CanonicalTree {
    Leaf,
    Split(usize, u64, Box<CanonicalTree>, Box<CanonicalTree>),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level() -> RegressionTree {
        let mut t = RegressionTree::leaf(0.0);
        let (l, r) = t.grow(0, SplitRule { variable: 0, threshold: 0.0 }).unwrap();
        let (ll, lr) = t.grow(l, SplitRule { variable: 1, threshold: 1.0 }).unwrap();
        t.set_leaf_value(ll, -2.0);
        t.set_leaf_value(lr, -1.0);
        t.set_leaf_value(r, 3.0);
        t
    }

    #[test]
    fn single_leaf_predicts_constant() {
        let t = RegressionTree::leaf(0.3);
        let x = DMatrix::from_row_slice(3, 1, &[-5.0, 0.0, 9.0]);
        assert_eq!(t.predict(&x).unwrap(), vec![0.3; 3]);
    }

    #[test]
    fn ties_route_left() {
        let mut t = RegressionTree::leaf(0.0);
        let (l, r) = t.grow(0, SplitRule { variable: 0, threshold: 0.0 }).unwrap();
        t.set_leaf_value(l, -1.0);
        t.set_leaf_value(r, 1.0);
        let x = DMatrix::from_row_slice(3, 1, &[-0.5, 0.0, 0.5]);
        assert_eq!(t.predict(&x).unwrap(), vec![-1.0, -1.0, 1.0]);
    }

    #[test]
    fn invalid_variable_is_structural_error() {
        let t = two_level();
        let x = DMatrix::zeros(2, 1);
        assert!(matches!(t.predict(&x), Err(Error::Structure(_))));
    }

    #[test]
    fn counts_and_validation() {
        let t = two_level();
        t.validate().unwrap();
        assert_eq!(t.n_leaves(), 3);
        assert_eq!(t.n_internal(), 2);
        assert_eq!(t.max_depth(), 2);
        assert_eq!(t.prunable_nodes().len(), 1);
        assert_eq!(t.internal_pairs().len(), 1);
    }

    #[test]
    fn prune_recycles_slots() {
        let mut t = two_level();
        let p = t.prunable_nodes()[0];
        t.prune(p, 0.5).unwrap();
        t.validate().unwrap();
        assert_eq!(t.n_leaves(), 2);
        let before = t.capacity();
        let leaf = t.leaves()[0];
        t.grow(leaf, SplitRule { variable: 0, threshold: 2.0 }).unwrap();
        assert_eq!(t.capacity(), before);
        t.validate().unwrap();
    }

    #[test]
    fn prune_rejects_non_prunable() {
        let mut t = two_level();
        assert!(t.prune(0, 0.0).is_err());
        let leaf = t.leaves()[0];
        assert!(t.prune(leaf, 0.0).is_err());
    }
}
