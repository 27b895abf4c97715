use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::als::{CacheStats, MttkrpEngine};
use crate::error::{invalid_arg, Error, Result};
use crate::tensor::{contract_many_to_rank, multi_ttv, DenseTensor, FlopCounter, Matrix};

use super::schedule::one_based;
use super::{chain, split, Intermediate, MsdtSchedule, TensorVariants};

#[derive(Clone, Copy, Debug)]
enum Plan {
    Dt,
    Msdt { fuse_levels: usize },
}

struct SegmentState {
    index: usize,
    order: Vec<usize>,
    /// `None` when the root is the input tensor itself.
    root: Option<Arc<Intermediate>>,
    cache: HashMap<Vec<usize>, Arc<Intermediate>>,
    done: HashSet<Vec<usize>>,
}

/// Shared machinery of both tree engines: a sequence of segments, each a
/// binary tree over a run of factor updates below a root.
struct TreeEngine<'a> {
    variants: TensorVariants<'a>,
    plan: Plan,
    order: usize,
    segment_len: usize,
    step: usize,
    segment: Option<SegmentState>,
    /// Most recent contraction of the input tensor. Kept until the next one
    /// is computed so a following PP initialization can reuse it.
    first_level: Option<Arc<Intermediate>>,
    stats: CacheStats,
}

impl<'a> TreeEngine<'a> {
    fn new(t: &'a DenseTensor, plan: Plan) -> Result<Self> {
        let order = t.order();
        let (segment_len, variants) = match plan {
            Plan::Dt => {
                if order < 2 {
                    return Err(invalid_arg!("a dimension tree needs order at least 2"));
                }
                // outer-axis contractions only, the original layout suffices
                (order, TensorVariants::original_only(t))
            }
            Plan::Msdt { fuse_levels } => {
                let s = MsdtSchedule::with_fusion(order, fuse_levels)?;
                (s.segment_len, TensorVariants::new(t)?)
            }
        };
        Ok(Self {
            variants,
            plan,
            order,
            segment_len,
            step: 0,
            segment: None,
            first_level: None,
            stats: CacheStats::default(),
        })
    }

    fn refresh_stats(&mut self) {
        let mut live = 0;
        let mut seen: Vec<*const Intermediate> = Vec::new();
        let mut count = |x: &Arc<Intermediate>| {
            let p = Arc::as_ptr(x);
            if !seen.contains(&p) {
                seen.push(p);
                live += x.words();
            }
        };
        if let Some(f) = &self.first_level {
            count(f);
        }
        if let Some(seg) = &self.segment {
            if let Some(r) = &seg.root {
                count(r);
            }
            for x in seg.cache.values() {
                count(x);
            }
        }
        self.stats.live_words = live;
        self.stats.peak_words = self.stats.peak_words.max(live);
    }

    /// Contracts `modes` of the input tensor into the rank axis.
    fn contract_input(&mut self, modes: &[usize], factors: &[Matrix], versions: &[u64], counter: &FlopCounter) -> Result<Arc<Intermediate>> {
        let (axes, data) = if modes.len() == 1 {
            self.variants.contract(modes[0], &factors[modes[0]], counter)?
        } else {
            let t = self.variants.original();
            let fs: Vec<&Matrix> = modes.iter().map(|&m| &factors[m]).collect();
            let data = contract_many_to_rank(t, modes, &fs, counter)?;
            ((0..self.order).filter(|m| !modes.contains(m)).collect(), data)
        };
        let node = Arc::new(Intermediate {
            axes,
            data,
            stamps: modes.iter().map(|&m| (m, versions[m])).collect(),
        });
        self.stats.first_level_contractions += 1;
        // both the old and the new first-level tensor are alive here
        let previous = self.first_level.replace(node.clone());
        self.refresh_stats();
        drop(previous);
        Ok(node)
    }

    fn start_segment(&mut self, index: usize, factors: &[Matrix], versions: &[u64], counter: &FlopCounter) -> Result<()> {
        let n = self.order;
        let start = index * self.segment_len;
        let order: Vec<usize> = (0..self.segment_len).map(|i| (start + i) % n).collect();
        self.segment = None;
        let root = match self.plan {
            Plan::Dt => None,
            Plan::Msdt { fuse_levels } => {
                let modes: Vec<usize> = (0..=fuse_levels).map(|q| (start + n * (q + 1) - 1 - q) % n).collect();
                Some(self.contract_input(&modes, factors, versions, counter)?)
            }
        };
        self.segment = Some(SegmentState { index, order, root, cache: HashMap::new(), done: HashSet::new() });
        self.refresh_stats();
        Ok(())
    }

    fn mttkrp(&mut self, factors: &[Matrix], versions: &[u64], mode: usize, counter: &FlopCounter) -> Result<Matrix> {
        let n = self.order;
        if factors.len() != n || versions.len() != n {
            return Err(invalid_arg!("expected {n} factors and versions"));
        }
        let expected = self.step % n;
        if mode != expected {
            return Err(invalid_arg!(
                "the tree schedule expects mode {expected} next, got {mode}; call reset() to restart"
            ));
        }
        let index = self.step / self.segment_len;
        if self.segment.as_ref().map(|s| s.index) != Some(index) {
            self.start_segment(index, factors, versions, counter)?;
        }
        let order = self.segment.as_ref().expect("segment started").order.clone();
        let out = self.descend(&order, mode, factors, versions, counter)?;
        self.step += 1;
        Ok(out)
    }

    /// Walks from the segment root to the leaf of `mode`, computing missing
    /// nodes on the way.
    fn descend(&mut self, root_order: &[usize], mode: usize, factors: &[Matrix], versions: &[u64], counter: &FlopCounter) -> Result<Matrix> {
        let mut node_order = root_order.to_vec();
        loop {
            let (a, b) = split(&node_order);
            let first = a.contains(&mode);
            let child: Vec<usize> = if first { a.to_vec() } else { b.to_vec() };
            let seg = self.segment.as_ref().expect("segment started");
            let cached = if child.len() > 1 { seg.cache.get(&child).cloned() } else { None };
            let child_node = match cached {
                Some(c) => c,
                None => {
                    let parent = if node_order.len() == root_order.len() {
                        seg.root.clone()
                    } else {
                        Some(seg.cache.get(&node_order).cloned().ok_or_else(|| {
                            Error::InternalLogic(format!("missing tree node {}", one_based(&node_order)))
                        })?)
                    };
                    let c = self.contract_chain(parent, &chain(&node_order, first), factors, versions, counter)?;
                    let seg = self.segment.as_mut().expect("segment started");
                    seg.done.insert(child.clone());
                    if child.len() > 1 {
                        seg.cache.insert(child.clone(), c.clone());
                    }
                    let (sa, sb) = split(&node_order);
                    if seg.done.contains(sa) && seg.done.contains(sb) {
                        seg.cache.remove(&node_order);
                    }
                    self.refresh_stats();
                    c
                }
            };
            if !child_node.is_current(versions) {
                return Err(Error::InternalLogic(format!(
                    "stale intermediate {} read for mode {mode}",
                    one_based(&child)
                )));
            }
            if child.len() == 1 {
                let rank = *child_node.data.shape().last().expect("rank axis");
                return Matrix::from_vec(factors[mode].rows(), rank, child_node.data.data().to_vec());
            }
            node_order = child;
        }
    }

    fn contract_chain(
        &mut self,
        parent: Option<Arc<Intermediate>>,
        modes: &[usize],
        factors: &[Matrix],
        versions: &[u64],
        counter: &FlopCounter,
    ) -> Result<Arc<Intermediate>> {
        let mut rest = modes;
        let mut cur = match parent {
            Some(p) => {
                if !p.is_current(versions) {
                    return Err(Error::InternalLogic(format!(
                        "stale intermediate {} used as a parent",
                        one_based(&p.axes)
                    )));
                }
                p
            }
            None => {
                let first = self.contract_input(&modes[..1], factors, versions, counter)?;
                rest = &modes[1..];
                first
            }
        };
        for &m in rest {
            let pos = cur.position(m).ok_or_else(|| Error::InternalLogic(format!("mode {m} already contracted")))?;
            let data = multi_ttv(&cur.data, &factors[m], pos, counter)?;
            let mut axes = cur.axes.clone();
            axes.remove(pos);
            let mut stamps = cur.stamps.clone();
            stamps.push((m, versions[m]));
            cur = Arc::new(Intermediate { axes, data, stamps });
        }
        Ok(cur)
    }

    fn reset(&mut self) {
        self.step = 0;
        self.segment = None;
        self.first_level = None;
        self.refresh_stats();
    }

    fn reusable_first_level(&self, versions: &[u64]) -> Option<Intermediate> {
        self.first_level
            .as_ref()
            .filter(|f| f.stamps.len() == 1 && f.is_current(versions))
            .map(|f| (**f).clone())
    }

    fn dump_cache(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, tag: &str, x: &Intermediate| {
            let stamps: Vec<String> = x.stamps.iter().map(|(m, v)| format!("A{}@{v}", m + 1)).collect();
            writeln!(out, "{tag} kept {} stamps {}", one_based(&x.axes), stamps.join(",")).unwrap();
        };
        if let Some(f) = &self.first_level {
            line(&mut out, "first-level", f);
        }
        if let Some(seg) = &self.segment {
            if let Some(r) = &seg.root {
                line(&mut out, "root", r);
            }
            let mut keys: Vec<_> = seg.cache.keys().collect();
            keys.sort();
            for k in keys {
                line(&mut out, "node", &seg.cache[k]);
            }
        }
        out
    }
}

/// The standard dimension tree: per sweep, the input tensor is contracted
/// once with `A^(N)` (serving the first half of the modes) and once with
/// `A^(1)` (serving the second half).
pub struct DtEngine<'a>(TreeEngine<'a>);

impl<'a> DtEngine<'a> {
    pub fn new(t: &'a DenseTensor) -> Result<Self> {
        Ok(Self(TreeEngine::new(t, Plan::Dt)?))
    }

    /// Live cache entries with their version stamps, one per line.
    pub fn dump_cache(&self) -> String {
        self.0.dump_cache()
    }
}

/// The multi-sweep dimension tree, optionally with `fuse_levels` upper
/// levels folded into each root contraction (see [`MsdtSchedule`]).
pub struct MsdtEngine<'a>(TreeEngine<'a>);

impl<'a> MsdtEngine<'a> {
    pub fn new(t: &'a DenseTensor, fuse_levels: usize) -> Result<Self> {
        Ok(Self(TreeEngine::new(t, Plan::Msdt { fuse_levels })?))
    }

    /// Extra words held by the permuted input copies.
    pub fn variant_words(&self) -> usize {
        self.0.variants.extra_words()
    }

    pub fn dump_cache(&self) -> String {
        self.0.dump_cache()
    }
}

macro_rules! delegate_engine {
    ($ty:ident) => {
        impl MttkrpEngine for $ty<'_> {
            fn mttkrp(&mut self, factors: &[Matrix], versions: &[u64], mode: usize, counter: &FlopCounter) -> Result<Matrix> {
                self.0.mttkrp(factors, versions, mode, counter)
            }

            fn reset(&mut self) {
                self.0.reset()
            }

            fn stats(&self) -> CacheStats {
                self.0.stats
            }

            fn reusable_first_level(&self, versions: &[u64]) -> Option<Intermediate> {
                self.0.reusable_first_level(versions)
            }
        }
    };
}

delegate_engine!(DtEngine);
delegate_engine!(MsdtEngine);
