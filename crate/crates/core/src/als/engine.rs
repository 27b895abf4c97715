use crate::dimtree::Intermediate;
use crate::error::Result;
use crate::tensor::{mttkrp_direct, DenseTensor, FlopCounter, Matrix};

/// Memory and contraction statistics of an engine's cached intermediates,
/// in words (one `f64` each).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub live_words: usize,
    pub peak_words: usize,
    /// Contractions performed directly against the input tensor.
    pub first_level_contractions: usize,
}

/// A way of producing `M^(n)` for the factor update of mode `n`.
///
/// Calls arrive in ALS update order. `versions[i]` identifies the current
/// contents of `factors[i]`; engines that cache intermediates use it to
/// decide validity.
pub trait MttkrpEngine: Send {
    fn mttkrp(
        &mut self,
        factors: &[Matrix],
        versions: &[u64],
        mode: usize,
        counter: &FlopCounter,
    ) -> Result<Matrix>;

    /// Forgets all cached state. The next call must be for mode 0 and
    /// starts a fresh schedule.
    fn reset(&mut self) {}

    fn stats(&self) -> CacheStats {
        CacheStats::default()
    }

    /// A cached single-mode contraction of the input tensor that is still
    /// valid for `versions`, if the engine holds one.
    fn reusable_first_level(&self, _versions: &[u64]) -> Option<Intermediate> {
        None
    }
}

/// Recomputes every MTTKRP from scratch with [`mttkrp_direct`].
pub struct DirectEngine<'a> {
    t: &'a DenseTensor,
}

impl<'a> DirectEngine<'a> {
    pub fn new(t: &'a DenseTensor) -> Self {
        Self { t }
    }
}

impl MttkrpEngine for DirectEngine<'_> {
    fn mttkrp(&mut self, factors: &[Matrix], _versions: &[u64], mode: usize, counter: &FlopCounter) -> Result<Matrix> {
        mttkrp_direct(self.t, factors, mode, counter)
    }
}
