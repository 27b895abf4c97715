use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Kernel category a multiply-add is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Ttm,
    Mttv,
    KhatriRao,
    Hadamard,
    Solve,
    Other,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Ttm,
        Phase::Mttv,
        Phase::KhatriRao,
        Phase::Hadamard,
        Phase::Solve,
        Phase::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Phase::Ttm => "ttm",
            Phase::Mttv => "mttv",
            Phase::KhatriRao => "khatri_rao",
            Phase::Hadamard => "hadamard",
            Phase::Solve => "solve",
            Phase::Other => "other",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

/// Shared multiply-add counter, one sub-counter per [`Phase`].
///
/// Cloning yields another handle to the same counts. A fused multiply-add
/// is one count; [`FlopSnapshot::flops`] doubles it to the usual
/// two-flops-per-multiply-add convention used by the analytic cost formulas.
#[derive(Clone, Default)]
pub struct FlopCounter {
    counts: Arc<[AtomicU64; 6]>,
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, phase: Phase, madds: u64) {
        self.counts[phase.index()].fetch_add(madds, Ordering::Relaxed);
    }

    /// Adds every phase of `s`.
    pub fn add_snapshot(&self, s: &FlopSnapshot) {
        for phase in Phase::ALL {
            self.add(phase, s.madds(phase));
        }
    }

    pub fn snapshot(&self) -> FlopSnapshot {
        let mut madds = [0u64; 6];
        for (slot, c) in madds.iter_mut().zip(self.counts.iter()) {
            *slot = c.load(Ordering::Relaxed);
        }
        FlopSnapshot { madds }
    }

    pub fn reset(&self) {
        for c in self.counts.iter() {
            c.store(0, Ordering::Relaxed);
        }
    }
}

impl fmt::Debug for FlopCounter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.snapshot().fmt(f)
    }
}

/// Point-in-time copy of a [`FlopCounter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlopSnapshot {
    madds: [u64; 6],
}

impl FlopSnapshot {
    pub fn madds(&self, phase: Phase) -> u64 {
        self.madds[phase.index()]
    }

    pub fn total_madds(&self) -> u64 {
        self.madds.iter().sum()
    }

    /// Floating point operations charged to `phase` (two per multiply-add).
    pub fn flops(&self, phase: Phase) -> u64 {
        2 * self.madds(phase)
    }

    pub fn total_flops(&self) -> u64 {
        2 * self.total_madds()
    }

    /// Flops in every phase other than TTM and multi-TTV.
    pub fn other_flops(&self) -> u64 {
        self.total_flops() - self.flops(Phase::Ttm) - self.flops(Phase::Mttv)
    }

    /// Counts accumulated since `earlier`.
    pub fn since(&self, earlier: &FlopSnapshot) -> FlopSnapshot {
        let mut madds = [0u64; 6];
        for (i, slot) in madds.iter_mut().enumerate() {
            *slot = self.madds[i] - earlier.madds[i];
        }
        FlopSnapshot { madds }
    }

    /// Element-wise sum of two snapshots.
    pub fn plus(&self, other: &FlopSnapshot) -> FlopSnapshot {
        let mut madds = self.madds;
        for (slot, o) in madds.iter_mut().zip(other.madds) {
            *slot += o;
        }
        FlopSnapshot { madds }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_is_sum_of_phases() {
        let c = FlopCounter::new();
        c.add(Phase::Ttm, 10);
        c.add(Phase::Solve, 3);
        c.clone().add(Phase::Other, 2);
        let s = c.snapshot();
        let by_phase: u64 = Phase::ALL.iter().map(|&p| s.madds(p)).sum();
        assert_eq!(s.total_madds(), by_phase);
        assert_eq!(s.total_madds(), 15);
        assert_eq!(s.other_flops(), 10);
    }
}
