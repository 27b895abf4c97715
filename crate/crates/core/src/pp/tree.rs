use std::fmt::Write as _;

use crate::error::{invalid_arg, Result};

/// One intermediate of the PP dimension tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PpTreeNode {
    /// 1-based level; the input tensor is level 1.
    pub level: usize,
    /// 0-based modes kept, ascending.
    pub kept_modes: Vec<usize>,
    /// Index of the parent within the level above (0 for the root).
    pub parent_index: usize,
}

/// The PP dimension tree of an order-`N` tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PpTree {
    pub order: usize,
    /// Labels are rotated by this many modes: label `L` (1-based) is mode
    /// `(L - 1 + rotation) mod N`.
    pub rotation: usize,
    levels: Vec<Vec<PpTreeNode>>,
}

impl PpTree {
    pub(crate) fn build(n: usize, rotation: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid_arg!("the PP tree needs order at least 3, got {n}"));
        }
        let mode = |label: usize| (label - 1 + rotation) % n;
        let mut levels: Vec<Vec<PpTreeNode>> = Vec::new();
        for l in 1..n {
            let mut nodes = Vec::new();
            for i in 1..=l + 1 {
                for j in i + 1..=l + 1 {
                    let mut kept: Vec<usize> = std::iter::once(i).chain(j..j + n - l).map(mode).collect();
                    kept.sort_unstable();
                    let parent_index = match levels.last() {
                        None => 0,
                        Some(above) => above
                            .iter()
                            .position(|p| kept.iter().all(|m| p.kept_modes.contains(m)))
                            .expect("a superset exists at the level above"),
                    };
                    nodes.push(PpTreeNode { level: l, kept_modes: kept, parent_index });
                }
            }
            levels.push(nodes);
        }
        Ok(Self { order: n, rotation, levels })
    }

    /// Nodes at 1-based `level` (1 ..= N-1).
    pub fn level(&self, level: usize) -> &[PpTreeNode] {
        &self.levels[level - 1]
    }

    /// One line per node with 1-based modes.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (l, nodes) in self.levels.iter().enumerate() {
            for (k, node) in nodes.iter().enumerate() {
                let kept: Vec<String> = node.kept_modes.iter().map(|m| (m + 1).to_string()).collect();
                let parent = if l == 0 { "-".to_string() } else { node.parent_index.to_string() };
                writeln!(out, "level {} node {k} kept {{{}}} parent {parent}", l + 1, kept.join(",")).unwrap();
            }
        }
        out
    }
}

/// The unrotated PP dimension tree.
pub fn pp_tree(n: usize) -> Result<PpTree> {
    PpTree::build(n, 0)
}
