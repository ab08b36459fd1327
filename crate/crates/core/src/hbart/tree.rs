use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One node of a fitted tree. Internal nodes send a row left when
/// `row[column] < threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Immutable binary tree in arena form; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    /// Checks the arena describes a single binary tree rooted at 0 in which
    /// every node is reachable exactly once and every leaf value is finite.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree has no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= nodes.len() {
                return Err(Error::Format(format!("child index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Format(format!("node {i} reached twice")));
            }
            match &nodes[i] {
                TreeNode::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    if threshold.is_nan() {
                        return Err(Error::Format(format!("node {i} has NaN threshold")));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
                TreeNode::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(Error::Format(format!("leaf {i} is not finite")));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("tree has unreachable nodes".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Index of the leaf `row` falls into.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    column,
                    threshold,
                    left,
                    right,
                } => i = if row[column] < threshold { left } else { right },
                TreeNode::Leaf { .. } => return i,
            }
        }
    }

    pub fn evaluate(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn max_column(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { column, .. } => Some(*column),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }
}
