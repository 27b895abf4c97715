use crate::error::Result;
use crate::tensor::{contract_to_rank, DenseTensor, FlopCounter, Matrix};

/// The input tensor plus permuted copies such that every mode is the first
/// or last axis of some stored layout.
///
/// Modes `0` and `N-1` are outer axes of the original. The middle modes are
/// paired up; the copy for the pair `(a, b)` has axis order
/// `[a, remaining modes ascending, b]`, so `⌈(N-2)/2⌉` copies are stored
/// (one for `N = 3` and `N = 4`).
#[derive(Clone, Debug)]
pub struct TensorVariants<'a> {
    original: &'a DenseTensor,
    copies: Vec<(Vec<usize>, DenseTensor)>,
}

impl<'a> TensorVariants<'a> {
    pub fn new(t: &'a DenseTensor) -> Result<Self> {
        let n = t.order();
        let middle: Vec<usize> = (1..n.saturating_sub(1)).collect();
        let mut copies = Vec::new();
        for pair in middle.chunks(2) {
            let a = pair[0];
            let b = pair.get(1).copied();
            let mut axes = vec![a];
            axes.extend((0..n).filter(|&m| m != a && Some(m) != b));
            axes.extend(b);
            let data = t.permute(&axes)?;
            copies.push((axes, data));
        }
        Ok(Self { original: t, copies })
    }

    /// No copies; only outer modes can be contracted without transposing.
    pub(crate) fn original_only(t: &'a DenseTensor) -> Self {
        Self { original: t, copies: Vec::new() }
    }

    pub fn original(&self) -> &DenseTensor {
        self.original
    }

    /// Axis orders of the stored permuted copies.
    pub fn copy_layouts(&self) -> Vec<&[usize]> {
        self.copies.iter().map(|(a, _)| a.as_slice()).collect()
    }

    /// Extra words stored beyond the original tensor.
    pub fn extra_words(&self) -> usize {
        self.copies.iter().map(|(_, d)| d.len()).sum()
    }

    /// A layout in which `mode` is the first or last axis, with that axis
    /// position.
    pub fn layout_for(&self, mode: usize) -> (&DenseTensor, Vec<usize>, usize) {
        let n = self.original.order();
        if mode == 0 || mode + 1 == n {
            return (self.original, (0..n).collect(), mode);
        }
        for (axes, data) in &self.copies {
            if axes[0] == mode {
                return (data, axes.clone(), 0);
            }
            if axes[n - 1] == mode {
                return (data, axes.clone(), n - 1);
            }
        }
        // no stored copy: contract the middle axis in place
        (self.original, (0..n).collect(), mode)
    }

    /// `T ×_mode A^(mode)` into the rank axis; returns the remaining axes
    /// in storage order and the contracted tensor.
    pub fn contract(&self, mode: usize, a: &Matrix, counter: &FlopCounter) -> Result<(Vec<usize>, DenseTensor)> {
        let (t, mut axes, pos) = self.layout_for(mode);
        let data = contract_to_rank(t, pos, a, counter)?;
        axes.remove(pos);
        Ok((axes, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_for_orders_three_and_four() {
        let t3 = DenseTensor::zeros(vec![2, 3, 4]).unwrap();
        let v = TensorVariants::new(&t3).unwrap();
        assert_eq!(v.copy_layouts(), vec![&[1, 0, 2][..]]);
        let t4 = DenseTensor::zeros(vec![2, 3, 4, 5]).unwrap();
        let v = TensorVariants::new(&t4).unwrap();
        assert_eq!(v.copy_layouts(), vec![&[1, 0, 3, 2][..]]);
        for m in 0..4 {
            let (_, axes, pos) = v.layout_for(m);
            assert_eq!(axes[pos], m);
            assert!(pos == 0 || pos == 3);
        }
        let t5 = DenseTensor::zeros(vec![1, 2, 1, 2, 1]).unwrap();
        assert_eq!(TensorVariants::new(&t5).unwrap().copy_layouts().len(), 2);
    }

    #[test]
    fn contraction_matches_original_layout() {
        let t = DenseTensor::from_fn(vec![3, 4, 5], |i| (i[0] * 20 + i[1] * 5 + i[2]) as f64).unwrap();
        let v = TensorVariants::new(&t).unwrap();
        let a = Matrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 - 1.5);
        let c = FlopCounter::new();
        let (axes, got) = v.contract(1, &a, &c).unwrap();
        assert_eq!(axes, vec![0, 2]);
        let expect = contract_to_rank(&t, 1, &a, &c).unwrap();
        assert_eq!(got, expect);
    }
}
