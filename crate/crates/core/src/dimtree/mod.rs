//! Dimension-tree MTTKRP engines.
//!
//! Both engines cache partially contracted intermediates
//! `M^(i1..im) = T_(i1..im) ⊙_{j ∉ {i1..im}} A^(j)` and hand out `M^(n)` in
//! ALS update order. The standard tree ([`DtEngine`]) contracts the input
//! tensor twice per sweep. The multi-sweep tree ([`MsdtEngine`]) lets each
//! contraction of the input tensor serve `N - 1` consecutive factor updates,
//! which may span two sweeps, so it needs `N` such contractions every `N - 1`
//! sweeps.
//!
//! Every cached intermediate carries the factor versions it was contracted
//! with. Reading one whose versions no longer match the model is a bug and
//! fails with [`Error::InternalLogic`](crate::Error::InternalLogic).

mod engine;
mod schedule;
mod variants;

pub use engine::{DtEngine, MsdtEngine};
pub use schedule::{build_dt, build_msdt_schedule, MsdtSchedule, ScheduleEntry, Segment, TreeDescription, TreeNode};
pub use variants::TensorVariants;

use crate::tensor::DenseTensor;

/// A cached partial contraction.
#[derive(Clone, Debug)]
pub struct Intermediate {
    /// Modes of the leading axes, in storage order.
    pub axes: Vec<usize>,
    /// Shape `s_axes[0] x ... x s_axes[m-1] x R`.
    pub data: DenseTensor,
    /// Contracted modes with the factor version used for each.
    pub stamps: Vec<(usize, u64)>,
}

impl Intermediate {
    pub fn is_current(&self, versions: &[u64]) -> bool {
        self.stamps.iter().all(|&(m, v)| versions[m] == v)
    }

    pub fn words(&self) -> usize {
        self.data.len()
    }

    /// Axis position of `mode`.
    pub fn position(&self, mode: usize) -> Option<usize> {
        self.axes.iter().position(|&a| a == mode)
    }
}

/// Splits an ordered mode list into the halves served by the two children
/// of a tree node: the first `⌈len/2⌉` modes and the rest.
pub(crate) fn split(order: &[usize]) -> (&[usize], &[usize]) {
    order.split_at(order.len().div_ceil(2))
}

/// Modes to contract, in order, to go from a node serving `order` to its
/// child serving the first half (`first == true`) or the second half.
///
/// The first child contracts the second half from its last mode backwards;
/// the second child contracts the first half from its first mode onwards.
/// For the whole tensor this makes the first contraction hit an outer axis.
pub(crate) fn chain(order: &[usize], first: bool) -> Vec<usize> {
    let (a, b) = split(order);
    if first {
        b.iter().rev().copied().collect()
    } else {
        a.to_vec()
    }
}
