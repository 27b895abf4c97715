use std::fmt::Write as _;

use crate::error::{invalid_arg, Error, Result};

use super::{chain, split};

/// One node of a dimension tree description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    /// Modes still present, ascending.
    pub kept_modes: Vec<usize>,
    pub parent: Option<usize>,
    /// Mode contracted to obtain this node from its parent.
    pub contracted: Option<usize>,
    /// Distance from the root.
    pub level: usize,
}

/// Static shape of a dimension tree: nodes in creation order, root first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeDescription {
    pub nodes: Vec<TreeNode>,
}

impl TreeDescription {
    /// Tree below a root that keeps `order` (in service order).
    pub(crate) fn for_order(order: &[usize]) -> Self {
        let mut kept = order.to_vec();
        kept.sort_unstable();
        let mut nodes = vec![TreeNode { kept_modes: kept, parent: None, contracted: None, level: 0 }];
        describe(order, 0, &mut nodes);
        Self { nodes }
    }

    /// Kept-mode sets at `level`, in creation order.
    pub fn level(&self, level: usize) -> Vec<Vec<usize>> {
        self.nodes
            .iter()
            .filter(|n| n.level == level)
            .map(|n| n.kept_modes.clone())
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// One line per node: id, 1-based kept modes, parent id and the
    /// contracted mode (the key of the node's validity stamp).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let parent = n.parent.map_or("-".to_string(), |p| p.to_string());
            let stamp = n.contracted.map_or("-".to_string(), |m| format!("A{}", m + 1));
            writeln!(
                out,
                "node {i} level {} kept {} parent {parent} contracts {stamp}",
                n.level,
                one_based(&n.kept_modes)
            )
            .unwrap();
        }
        out
    }
}

fn describe(order: &[usize], node: usize, nodes: &mut Vec<TreeNode>) {
    if order.len() < 2 {
        return;
    }
    let (a, b) = split(order);
    for (part, first) in [(a, true), (b, false)] {
        let mut parent = node;
        for m in chain(order, first) {
            let kept: Vec<usize> = nodes[parent].kept_modes.iter().copied().filter(|&k| k != m).collect();
            let level = nodes[parent].level + 1;
            nodes.push(TreeNode { kept_modes: kept, parent: Some(parent), contracted: Some(m), level });
            parent = nodes.len() - 1;
        }
        describe(part, parent, nodes);
    }
}

pub(crate) fn one_based(modes: &[usize]) -> String {
    let inner: Vec<String> = modes.iter().map(|m| (m + 1).to_string()).collect();
    format!("{{{}}}", inner.join(","))
}

/// The standard binary dimension tree for one ALS sweep of an order-`n`
/// tensor.
///
/// The root serves modes in update order; a node serving the list `O` has
/// children serving the first `⌈|O|/2⌉` modes and the rest. The first child
/// is reached by contracting the remaining modes last to first, the second
/// by contracting the first half in order. For `n = 4` the level-1 nodes
/// keep `{1,2,3}` and `{2,3,4}` (1-based).
pub fn build_dt(n: usize) -> Result<TreeDescription> {
    if n < 2 {
        return Err(invalid_arg!("a dimension tree needs order at least 2, got {n}"));
    }
    let order: Vec<usize> = (0..n).collect();
    Ok(TreeDescription::for_order(&order))
}

/// A run of consecutive factor updates served by one contraction of the
/// input tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub index: usize,
    /// Modes contracted directly from the input tensor to form the root.
    pub root_contracts: Vec<usize>,
    /// Modes served, in update order.
    pub order: Vec<usize>,
    /// Global index of the first update served (`sweep * N + mode`).
    pub first_update: usize,
}

/// Which subtree produces `M^(mode)` in a given sweep of the cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduleEntry {
    /// 0-based sweep within the cycle.
    pub sweep: usize,
    pub mode: usize,
    pub segment: usize,
    pub root_contracts: Vec<usize>,
}

/// Multi-sweep dimension tree plan.
///
/// Updates are numbered globally, `t = sweep * N + mode`. Segment `k` serves
/// the `L = N - 1 - fuse_levels` updates starting at `t = kL`; its root is
/// the input tensor contracted with the `fuse_levels + 1` factors updated
/// just before the segment starts, which stay unchanged for the whole
/// segment. Below the root a binary tree serves the segment's modes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MsdtSchedule {
    pub order: usize,
    pub fuse_levels: usize,
    pub segment_len: usize,
    /// Sweeps after which the plan repeats.
    pub cycle_sweeps: usize,
    pub segments: Vec<Segment>,
    pub entries: Vec<ScheduleEntry>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl MsdtSchedule {
    /// Schedule with `fuse_levels` extra upper levels folded into each root
    /// contraction (`0 <= fuse_levels <= n - 3`).
    pub fn with_fusion(n: usize, fuse_levels: usize) -> Result<Self> {
        if n < 3 {
            return Err(invalid_arg!(
                "the multi-sweep tree needs order at least 3 (got {n}); use the standard dimension tree"
            ));
        }
        if fuse_levels + 3 > n {
            return Err(invalid_arg!(
                "at most {} fused levels for order {n}, got {fuse_levels}",
                n - 3
            ));
        }
        let len = n - 1 - fuse_levels;
        let cycle_updates = n / gcd(n, len) * len;
        let cycle_sweeps = cycle_updates / n;
        let segments: Vec<Segment> = (0..cycle_updates / len).map(|k| segment(n, len, fuse_levels, k)).collect();
        let mut entries = Vec::with_capacity(cycle_updates);
        for s in &segments {
            for (i, &mode) in s.order.iter().enumerate() {
                entries.push(ScheduleEntry {
                    sweep: (s.first_update + i) / n,
                    mode,
                    segment: s.index,
                    root_contracts: s.root_contracts.clone(),
                });
            }
        }
        let schedule = Self { order: n, fuse_levels, segment_len: len, cycle_sweeps, segments, entries };
        schedule.check_staleness_safety()?;
        Ok(schedule)
    }

    /// Segment containing global update `t` (not limited to one cycle).
    pub fn segment_at(&self, t: usize) -> Segment {
        segment(self.order, self.segment_len, self.fuse_levels, t / self.segment_len)
    }

    /// Root contraction modes serving `mode` in `sweep` of the cycle.
    pub fn served_by(&self, sweep: usize, mode: usize) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|e| e.sweep == sweep && e.mode == mode)
            .map(|e| e.root_contracts.as_slice())
    }

    /// Verifies that every (sweep, mode) of the cycle is served exactly once
    /// and that no root-contracted factor is updated while its root is in
    /// use, which is what keeps the cached roots exact.
    pub fn check_staleness_safety(&self) -> Result<()> {
        let n = self.order;
        let mut seen = vec![0usize; self.cycle_sweeps * n];
        for e in &self.entries {
            seen[e.sweep * n + e.mode] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::InternalLogic("schedule does not serve every update exactly once".into()));
        }
        for s in &self.segments {
            for t in s.first_update..s.first_update + s.order.len() {
                let mode = t % n;
                if s.root_contracts.contains(&mode) {
                    return Err(Error::InternalLogic(format!(
                        "segment {} updates mode {mode} while its root depends on it",
                        s.index
                    )));
                }
            }
            if s.order.len() != self.segment_len {
                return Err(Error::InternalLogic("uneven segment".into()));
            }
        }
        Ok(())
    }

    /// Text rendering: one line per segment and the subtree under each root.
    pub fn dump(&self) -> String {
        let n = self.order;
        let mut out = String::new();
        writeln!(
            out,
            "msdt order {n} fuse {} segment {} cycle {} sweeps / {} root contractions",
            self.fuse_levels,
            self.segment_len,
            self.cycle_sweeps,
            self.segments.len()
        )
        .unwrap();
        for s in &self.segments {
            let served: Vec<String> = s
                .order
                .iter()
                .enumerate()
                .map(|(i, &m)| format!("s{}:M{}", (s.first_update + i) / n + 1, m + 1))
                .collect();
            writeln!(out, "root T x {} serves {}", one_based(&s.root_contracts), served.join(" ")).unwrap();
            for line in TreeDescription::for_order(&s.order).dump().lines() {
                writeln!(out, "  {line}").unwrap();
            }
        }
        out
    }
}

fn segment(n: usize, len: usize, fuse_levels: usize, k: usize) -> Segment {
    let start = k * len;
    let order = (0..len).map(|i| (start + i) % n).collect();
    let root_contracts = (0..=fuse_levels).map(|q| (start + n * (q + 1) - 1 - q) % n).collect();
    Segment { index: k, root_contracts, order, first_update: start }
}

/// The unfused multi-sweep schedule for order `n >= 3`.
pub fn build_msdt_schedule(n: usize) -> Result<MsdtSchedule> {
    MsdtSchedule::with_fusion(n, 0)
}
